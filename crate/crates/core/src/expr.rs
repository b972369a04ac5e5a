//! A small arithmetic-expression language over the variable `s`.
//!
//! Grammar: `+ - * / ^`, parentheses, numbers, `pi`, `e`, and the functions
//! `sqrt atan sin cos exp ln`. Expressions evaluate to second-order jets, so
//! first and second derivatives in `s` are exact.

use crate::error::{Error, Result};
use std::fmt;

/// Value with first and second derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self { v, d: 0.0, dd: 0.0 }
    }

    pub fn variable(v: f64) -> Self {
        Self { v, d: 1.0, dd: 0.0 }
    }

    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: self.d + o.d,
            dd: self.dd + o.dd,
        }
    }

    fn sub(self, o: Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            d: self.d - o.d,
            dd: self.dd - o.dd,
        }
    }

    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
            dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        }
    }

    /// `g(self)` given `g, g', g''` at `self.v`.
    fn chain(self, g: f64, g1: f64, g2: f64) -> Jet {
        Jet {
            v: g,
            d: g1 * self.d,
            dd: g2 * self.d * self.d + g1 * self.dd,
        }
    }

    fn recip(self) -> Jet {
        let v = self.v;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    fn powf(self, o: Jet) -> Jet {
        if o.d == 0.0 && o.dd == 0.0 {
            let c = o.v;
            let v = self.v;
            if c == 0.0 {
                return Jet::constant(1.0);
            }
            let g = v.powf(c);
            let g1 = if c == 1.0 { 1.0 } else { c * v.powf(c - 1.0) };
            let g2 = if c == 1.0 {
                0.0
            } else if c == 2.0 {
                2.0
            } else {
                c * (c - 1.0) * v.powf(c - 2.0)
            };
            self.chain(g, g1, g2)
        } else {
            // a^b = exp(b ln a)
            let ln = self.chain(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v));
            let e = o.mul(ln);
            let x = e.v.exp();
            e.chain(x, x, x)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sqrt,
    Atan,
    Sin,
    Cos,
    Exp,
    Ln,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression in the variable `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    src: String,
    root: Node,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.src)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            s: src.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.ws();
        if p.pos != p.s.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Self {
            src: src.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.src
    }

    pub fn eval(&self, s: f64) -> f64 {
        eval_value(&self.root, s)
    }

    pub fn jet(&self, s: f64) -> Jet {
        eval_jet(&self.root, Jet::variable(s))
    }
}

fn eval_value(n: &Node, s: f64) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var => s,
        Node::Neg(a) => -eval_value(a, s),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval_value(a, s), eval_value(b, s));
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                '/' => x / y,
                _ => x.powf(y),
            }
        }
        Node::Call(f, a) => {
            let x = eval_value(a, s);
            match f {
                Func::Sqrt => x.sqrt(),
                Func::Atan => x.atan(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Exp => x.exp(),
                Func::Ln => x.ln(),
            }
        }
    }
}

fn eval_jet(n: &Node, s: Jet) -> Jet {
    match n {
        Node::Num(v) => Jet::constant(*v),
        Node::Var => s,
        Node::Neg(a) => Jet::constant(0.0).sub(eval_jet(a, s)),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval_jet(a, s), eval_jet(b, s));
            match op {
                '+' => x.add(y),
                '-' => x.sub(y),
                '*' => x.mul(y),
                '/' => x.mul(y.recip()),
                _ => x.powf(y),
            }
        }
        Node::Call(f, a) => {
            let x = eval_jet(a, s);
            let v = x.v;
            match f {
                Func::Sqrt => {
                    let r = v.sqrt();
                    x.chain(r, 0.5 / r, -0.25 / (r * v))
                }
                Func::Atan => {
                    let q = 1.0 + v * v;
                    x.chain(v.atan(), 1.0 / q, -2.0 * v / (q * q))
                }
                Func::Sin => x.chain(v.sin(), v.cos(), -v.sin()),
                Func::Cos => x.chain(v.cos(), -v.sin(), -v.cos()),
                Func::Exp => {
                    let e = v.exp();
                    x.chain(e, e, e)
                }
                Func::Ln => x.chain(v.ln(), 1.0 / v, -1.0 / (v * v)),
            }
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c) = self.peek() {
            if c == b'+' || c == b'-' {
                self.pos += 1;
                let rhs = self.term()?;
                lhs = Node::Bin(c as char, Box::new(lhs), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c) = self.peek() {
            if c == b'*' || c == b'/' {
                self.pos += 1;
                let rhs = self.unary()?;
                lhs = Node::Bin(c as char, Box::new(lhs), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
                let func = match name {
                    "s" => return Ok(Node::Var),
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    "e" => return Ok(Node::Num(std::f64::consts::E)),
                    "sqrt" => Func::Sqrt,
                    "atan" => Func::Atan,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "ln" | "log" => Func::Ln,
                    _ => {
                        self.pos = start;
                        return Err(self.err(&format!("unknown identifier '{name}'")));
                    }
                };
                if self.peek() != Some(b'(') {
                    return Err(self.err("expected '(' after function name"));
                }
                self.pos += 1;
                let arg = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(Node::Call(func, Box::new(arg)))
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.s;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let txt = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        txt.parse::<f64>().map(Node::Num).map_err(|_| Error::Parse {
            pos: start,
            msg: format!("bad number '{txt}'"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_power() {
        let e = Expr::parse("1 + 2*s^2 - s/4").unwrap();
        assert!((e.eval(3.0) - (1.0 + 18.0 - 0.75)).abs() < 1e-15);
        let e = Expr::parse("-s^2").unwrap();
        assert_eq!(e.eval(3.0), -9.0);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval(0.0), 512.0);
    }

    #[test]
    fn jets_match_closed_forms() {
        let e = Expr::parse("((1+1)/(1+s))^3 - 1").unwrap();
        let s = 0.7;
        let j = e.jet(s);
        let a: f64 = 2.0;
        assert!((j.v - ((a / (1.0 + s)).powi(3) - 1.0)).abs() < 1e-14);
        assert!((j.d + 3.0 * a.powi(3) / (1.0 + s).powi(4)).abs() < 1e-13);
        assert!((j.dd - 12.0 * a.powi(3) / (1.0 + s).powi(5)).abs() < 1e-12);
        let e = Expr::parse("sqrt(1+s) + atan(s)*exp(-s) + sin(s)*cos(s)").unwrap();
        let h = 1e-5;
        let fd1 = (e.eval(s + h) - e.eval(s - h)) / (2.0 * h);
        let fd2 = (e.eval(s + h) - 2.0 * e.eval(s) + e.eval(s - h)) / (h * h);
        let j = e.jet(s);
        assert!((j.d - fd1).abs() < 1e-8);
        assert!((j.dd - fd2).abs() < 1e-4);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 + ").is_err());
        assert!(Expr::parse("foo(s)").is_err());
        assert!(Expr::parse("(s").is_err());
        assert!(Expr::parse("s s").is_err());
    }
}
