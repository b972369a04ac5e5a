//! Nonlinearity instances `(f, h, r0, kappa)` and hypothesis checks.

use crate::error::{invalid, Error, Result};
use crate::expr::Expr;
use crate::numerics::{golden_section_min, integrate, QuadOptions};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// The three built-in nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BuiltinCase {
    /// `f = 1 - s`, `h = s`.
    #[serde(rename = "GP1")]
    Gp1,
    /// `f = 1 - s`, `h = sqrt(1 + s)`.
    #[serde(rename = "GP2")]
    Gp2,
    /// `f = ((1 + r0^2)/(1 + s))^3 - 1`, `h = s`.
    #[serde(rename = "SF3")]
    Sf3,
}

impl BuiltinCase {
    pub const ALL: [BuiltinCase; 3] = [BuiltinCase::Gp1, BuiltinCase::Gp2, BuiltinCase::Sf3];

    pub fn id(self) -> &'static str {
        match self {
            BuiltinCase::Gp1 => "GP1",
            BuiltinCase::Gp2 => "GP2",
            BuiltinCase::Sf3 => "SF3",
        }
    }

    /// Accepts `GP1`/`GP2`/`SF3` (any case) or the numbers `1`, `2`, `3`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "1" | "GP1" => Ok(BuiltinCase::Gp1),
            "2" | "GP2" => Ok(BuiltinCase::Gp2),
            "3" | "SF3" => Ok(BuiltinCase::Sf3),
            other => Err(invalid(format!("unknown case id '{other}'"))),
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied nonlinearity given as closures. Missing derivatives fall
/// back to centered finite differences; a missing `F` falls back to
/// quadrature of `f`.
#[derive(Clone)]
pub struct CustomFunctions {
    pub f: ScalarFn,
    pub f_prime: Option<ScalarFn>,
    pub f_dprime: Option<ScalarFn>,
    pub h: ScalarFn,
    pub h_prime: Option<ScalarFn>,
    pub h_dprime: Option<ScalarFn>,
    pub big_f: Option<ScalarFn>,
}

impl CustomFunctions {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, h: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            f_prime: None,
            f_dprime: None,
            h: Arc::new(h),
            h_prime: None,
            h_dprime: None,
            big_f: None,
        }
    }
}

#[derive(Clone)]
enum Kind {
    Builtin(BuiltinCase),
    Expr { f: Arc<Expr>, h: Arc<Expr> },
    Custom(CustomFunctions),
}

/// JSON model descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub case: String,
    pub r0: f64,
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
}

/// One instance of the equation: nonlinearity `f`, quasilinear function `h`,
/// background amplitude `r0` and coupling `kappa`.
#[derive(Clone)]
pub struct NonlinearModel {
    kind: Kind,
    r0: f64,
    kappa: f64,
}

impl fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("id", &self.id())
            .field("r0", &self.r0)
            .field("kappa", &self.kappa)
            .finish()
    }
}

const FD_STEP1: f64 = 1e-6;
const FD_STEP2: f64 = 1e-4;

/// Builds one of the three built-in models.
pub fn builtin_model(case: BuiltinCase, r0: f64, kappa: f64) -> Result<NonlinearModel> {
    NonlinearModel::build(Kind::Builtin(case), r0, kappa)
}

impl NonlinearModel {
    fn build(kind: Kind, r0: f64, kappa: f64) -> Result<Self> {
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(invalid(format!("r0 must be positive and finite, got {r0}")));
        }
        if !kappa.is_finite() {
            return Err(invalid("kappa must be finite"));
        }
        let m = Self { kind, r0, kappa };
        let s0 = r0 * r0;
        let f0 = m.f(s0);
        let scale = 1.0 + m.f(0.0).abs();
        if !f0.is_finite() || f0.abs() > 1e-10 * scale {
            return Err(Error::BackgroundNotStationary { value: f0 });
        }
        Ok(m)
    }

    pub fn builtin(case: BuiltinCase, r0: f64, kappa: f64) -> Result<Self> {
        builtin_model(case, r0, kappa)
    }

    /// Model from expression strings in the variable `s`.
    pub fn from_expressions(f: &str, h: &str, r0: f64, kappa: f64) -> Result<Self> {
        let f = Arc::new(Expr::parse(f)?);
        let h = Arc::new(Expr::parse(h)?);
        Self::build(Kind::Expr { f, h }, r0, kappa)
    }

    pub fn from_functions(fns: CustomFunctions, r0: f64, kappa: f64) -> Result<Self> {
        Self::build(Kind::Custom(fns), r0, kappa)
    }

    pub fn from_descriptor(d: &ModelDescriptor) -> Result<Self> {
        if d.case.eq_ignore_ascii_case("custom") {
            let f =
                d.f.as_deref()
                    .ok_or_else(|| invalid("custom model needs an 'f' expression"))?;
            let h =
                d.h.as_deref()
                    .ok_or_else(|| invalid("custom model needs an 'h' expression"))?;
            Self::from_expressions(f, h, d.r0, d.kappa)
        } else {
            builtin_model(BuiltinCase::parse(&d.case)?, d.r0, d.kappa)
        }
    }

    /// Descriptor for serialization; closure models report `case: "closure"`.
    pub fn descriptor(&self) -> ModelDescriptor {
        match &self.kind {
            Kind::Builtin(c) => ModelDescriptor {
                case: c.id().into(),
                r0: self.r0,
                kappa: self.kappa,
                f: None,
                h: None,
            },
            Kind::Expr { f, h } => ModelDescriptor {
                case: "custom".into(),
                r0: self.r0,
                kappa: self.kappa,
                f: Some(f.source().into()),
                h: Some(h.source().into()),
            },
            Kind::Custom(_) => ModelDescriptor {
                case: "closure".into(),
                r0: self.r0,
                kappa: self.kappa,
                f: None,
                h: None,
            },
        }
    }

    pub fn id(&self) -> String {
        match &self.kind {
            Kind::Builtin(c) => c.id().to_string(),
            Kind::Expr { f, h } => format!("custom(f={f}, h={h})"),
            Kind::Custom(_) => "closure".to_string(),
        }
    }

    pub fn builtin_case(&self) -> Option<BuiltinCase> {
        match self.kind {
            Kind::Builtin(c) => Some(c),
            _ => None,
        }
    }

    /// Same nonlinearity with a different coupling.
    pub fn with_kappa(&self, kappa: f64) -> Self {
        Self {
            kind: self.kind.clone(),
            r0: self.r0,
            kappa,
        }
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn r0_sq(&self) -> f64 {
        self.r0 * self.r0
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn sf3_a(&self) -> f64 {
        1.0 + self.r0 * self.r0
    }

    pub fn f(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(BuiltinCase::Gp1 | BuiltinCase::Gp2) => 1.0 - s,
            Kind::Builtin(BuiltinCase::Sf3) => (self.sf3_a() / (1.0 + s)).powi(3) - 1.0,
            Kind::Expr { f, .. } => f.eval(s),
            Kind::Custom(c) => (c.f)(s),
        }
    }

    pub fn f_prime(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(BuiltinCase::Gp1 | BuiltinCase::Gp2) => -1.0,
            Kind::Builtin(BuiltinCase::Sf3) => -3.0 * self.sf3_a().powi(3) / (1.0 + s).powi(4),
            Kind::Expr { f, .. } => f.jet(s).d,
            Kind::Custom(c) => match &c.f_prime {
                Some(g) => g(s),
                None => fd1(&*c.f, s),
            },
        }
    }

    pub fn f_dprime(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(BuiltinCase::Gp1 | BuiltinCase::Gp2) => 0.0,
            Kind::Builtin(BuiltinCase::Sf3) => 12.0 * self.sf3_a().powi(3) / (1.0 + s).powi(5),
            Kind::Expr { f, .. } => f.jet(s).dd,
            Kind::Custom(c) => match (&c.f_dprime, &c.f_prime) {
                (Some(g), _) => g(s),
                (None, Some(g1)) => fd1(&**g1, s),
                (None, None) => fd2(&*c.f, s),
            },
        }
    }

    pub fn h(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(BuiltinCase::Gp1 | BuiltinCase::Sf3) => s,
            Kind::Builtin(BuiltinCase::Gp2) => (1.0 + s).sqrt(),
            Kind::Expr { h, .. } => h.eval(s),
            Kind::Custom(c) => (c.h)(s),
        }
    }

    pub fn h_prime(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(BuiltinCase::Gp1 | BuiltinCase::Sf3) => 1.0,
            Kind::Builtin(BuiltinCase::Gp2) => 0.5 / (1.0 + s).sqrt(),
            Kind::Expr { h, .. } => h.jet(s).d,
            Kind::Custom(c) => match &c.h_prime {
                Some(g) => g(s),
                None => fd1(&*c.h, s),
            },
        }
    }

    pub fn h_dprime(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(BuiltinCase::Gp1 | BuiltinCase::Sf3) => 0.0,
            Kind::Builtin(BuiltinCase::Gp2) => -0.25 / (1.0 + s).powf(1.5),
            Kind::Expr { h, .. } => h.jet(s).dd,
            Kind::Custom(c) => match (&c.h_dprime, &c.h_prime) {
                (Some(g), _) => g(s),
                (None, Some(g1)) => fd1(&**g1, s),
                (None, None) => fd2(&*c.h, s),
            },
        }
    }

    /// `int_a^b f(w) dw`, evaluated without cancellation for the built-ins.
    pub fn int_f(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            Kind::Builtin(BuiltinCase::Gp1 | BuiltinCase::Gp2) => 0.5 * (b - a) * ((1.0 - a) + (1.0 - b)),
            Kind::Builtin(BuiltinCase::Sf3) => {
                let aa = self.sf3_a();
                let (pa, pb) = (1.0 + a, 1.0 + b);
                let g = |p: f64| 0.5 * aa.powi(3) / (p * p) + p;
                // antiderivative of -f is g; F = g(sigma) - g(r0^2) rearranged
                -(g(pb) - g(pa))
            }
            Kind::Custom(CustomFunctions { big_f: Some(bf), .. }) => bf(a) - bf(b),
            _ => {
                let opts = QuadOptions::tol(1e-15, 1e-13);
                integrate(|w| self.f(w), a, b, opts)
                    .map(|r| r.value)
                    .unwrap_or(f64::NAN)
            }
        }
    }

    /// `F(s) = int_s^{r0^2} f(w) dw`.
    pub fn big_f(&self, s: f64) -> f64 {
        self.big_f_dev(s - self.r0_sq())
    }

    /// `F(r0^2 + xi)`, accurate for small `|xi|`.
    pub fn big_f_dev(&self, xi: f64) -> f64 {
        let s0 = self.r0_sq();
        match &self.kind {
            Kind::Builtin(BuiltinCase::Gp1 | BuiltinCase::Gp2) => {
                // int_{s0+xi}^{s0} (1 - w) dw with 1 - s0 = 0 only when r0 = 1
                let one_minus_s0 = 1.0 - s0;
                -xi * one_minus_s0 + 0.5 * xi * xi
            }
            Kind::Builtin(BuiltinCase::Sf3) => {
                let a = self.sf3_a();
                xi * xi * (3.0 * a + 2.0 * xi) / (2.0 * (a + xi) * (a + xi))
            }
            Kind::Custom(CustomFunctions { big_f: Some(bf), .. }) => bf(s0 + xi),
            _ => self.int_f(s0 + xi, s0),
        }
    }

    /// Ellipticity coefficient `nu(s) = 1 + 2 kappa s h'(s)^2`.
    pub fn nu(&self, s: f64) -> f64 {
        let hp = self.h_prime(s);
        1.0 + 2.0 * self.kappa * s * hp * hp
    }

    /// `d nu / ds = 2 kappa (h'^2 + 2 s h' h'')`.
    pub fn nu_prime(&self, s: f64) -> f64 {
        let hp = self.h_prime(s);
        2.0 * self.kappa * (hp * hp + 2.0 * s * hp * self.h_dprime(s))
    }

    /// Speed of sound `c_s = sqrt(-2 r0^2 f'(r0^2))`.
    pub fn speed_of_sound(&self) -> Result<f64> {
        speed_of_sound(self)
    }

    pub fn kappa_tilde(&self) -> KappaTilde {
        kappa_tilde(self)
    }

    pub fn check_hypotheses(&self, grid_n: usize) -> Result<HypothesisReport> {
        check_hypotheses(self, grid_n)
    }
}

fn fd1(g: &(dyn Fn(f64) -> f64 + Send + Sync), s: f64) -> f64 {
    let h = FD_STEP1 * (1.0 + s.abs());
    (g(s + h) - g(s - h)) / (2.0 * h)
}

fn fd2(g: &(dyn Fn(f64) -> f64 + Send + Sync), s: f64) -> f64 {
    let h = FD_STEP2 * (1.0 + s.abs());
    (g(s + h) - 2.0 * g(s) + g(s - h)) / (h * h)
}

/// Speed of sound `c_s = sqrt(-2 r0^2 f'(r0^2))`, the threshold speed for
/// nontrivial traveling waves. For `r0 = 1` this is `sqrt(-2 f'(1))`.
pub fn speed_of_sound(model: &NonlinearModel) -> Result<f64> {
    let fp = model.f_prime(model.r0_sq());
    if !fp.is_finite() {
        return Err(Error::NonFinite("f'(r0^2)".into()));
    }
    if fp > 0.0 {
        return Err(Error::ImaginarySoundSpeed { f_prime: fp });
    }
    if fp == 0.0 || fp.abs() < 1e-14 {
        return Err(Error::DegenerateSoundSpeed);
    }
    Ok((-2.0 * model.r0_sq() * fp).sqrt())
}

/// `sup_{s in (0, r0^2]} -1/(2 s h'(s)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaTilde {
    /// The supremum, or `-inf` when `h'` vanishes on the whole sample.
    pub value: f64,
    /// `h'` vanished at some sampled point (the constraint is vacuous there).
    pub h_prime_vanishes: bool,
    pub argmax_sigma: f64,
}

pub fn kappa_tilde(model: &NonlinearModel) -> KappaTilde {
    let s0 = model.r0_sq();
    let g = |s: f64| {
        let hp = model.h_prime(s);
        let d = 2.0 * s * hp * hp;
        if d > 0.0 && d.is_finite() {
            -1.0 / d
        } else {
            f64::NEG_INFINITY
        }
    };
    let n = 2000;
    let mut vanishes = false;
    let mut best = (f64::NEG_INFINITY, s0, n);
    for k in 1..=n {
        // denser near 0 where -1/(2 s h'^2) varies fastest
        let t = k as f64 / n as f64;
        let s = s0 * t * t;
        let hp = model.h_prime(s);
        if hp == 0.0 || !hp.is_finite() {
            vanishes = true;
        }
        let v = g(s);
        if v >= best.0 {
            best = (v, s, k);
        }
    }
    if !best.0.is_finite() {
        return KappaTilde {
            value: f64::NEG_INFINITY,
            h_prime_vanishes: true,
            argmax_sigma: f64::NAN,
        };
    }
    let (mut value, mut arg) = (best.0, best.1);
    if best.2 < n {
        let lo = s0 * ((best.2 - 1) as f64 / n as f64).powi(2);
        let hi = s0 * ((best.2 + 1) as f64 / n as f64).powi(2);
        let (xm, fm) = golden_section_min(|s| -g(s), lo.max(f64::MIN_POSITIVE), hi.min(s0), 1e-14 * s0);
        if -fm > value {
            value = -fm;
            arg = xm;
        }
    }
    KappaTilde {
        value,
        h_prime_vanishes: vanishes,
        argmax_sigma: arg,
    }
}

/// Outcome of one sampled hypothesis check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub pass: bool,
    /// Sample where the margin is smallest.
    pub worst_sigma: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// Smoothness is assumed, never verified.
    pub h1_smooth_assumed: bool,
    /// `min nu(s) > 0` over `[0, r0^2]`.
    pub h2_ellipticity: Check,
    /// `F > 0` on `[0, r0^2)` (margin `min F(s)/(s - r0^2)^2`) and `F''(r0^2) > 0`.
    pub h3_potential: Check,
    pub f_second_at_r0: f64,
    pub kappa_tilde: f64,
    pub kappa_tilde_vacuous: bool,
    /// Amplitude cap `min(raw, r0^2)`.
    pub xi_tilde: f64,
    /// Largest `xi` with `F > 0` and `nu > 0` on `(r0^2, r0^2 + xi]`, searched
    /// up to `4 r0^2`.
    pub xi_tilde_raw: f64,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.h2_ellipticity.pass && self.h3_potential.pass
    }
}

pub fn check_hypotheses(model: &NonlinearModel, grid_n: usize) -> Result<HypothesisReport> {
    if grid_n < 64 {
        return Err(invalid(format!("grid_n must be at least 64, got {grid_n}")));
    }
    let s0 = model.r0_sq();
    let cheb = |k: usize| 0.5 * s0 * (1.0 - (std::f64::consts::PI * k as f64 / (grid_n - 1) as f64).cos());

    let mut h2 = Check {
        pass: true,
        worst_sigma: 0.0,
        margin: f64::INFINITY,
    };
    let mut h3 = Check {
        pass: true,
        worst_sigma: 0.0,
        margin: f64::INFINITY,
    };
    for k in 0..grid_n {
        let s = cheb(k);
        let nu = model.nu(s);
        if !(nu >= h2.margin) {
            h2.margin = nu;
            h2.worst_sigma = s;
        }
        if k + 1 < grid_n {
            let d = s0 - s;
            let big_f = model.big_f_dev(-d);
            let m = big_f / (d * d);
            if !(m >= h3.margin) {
                h3.margin = m;
                h3.worst_sigma = s;
            }
        }
    }
    h2.pass = h2.margin > 0.0;
    let step = 1e-4 * (1.0 + s0);
    let f2 = (model.big_f_dev(step) - 2.0 * model.big_f_dev(0.0) + model.big_f_dev(-step)) / (step * step);
    h3.pass = h3.margin > 0.0 && f2 > 0.0;

    let kt = kappa_tilde(model);

    let cap_ok = |xi: f64| model.big_f_dev(xi) > 0.0 && model.nu(s0 + xi) > 0.0;
    let search = 4.0 * s0;
    let samples = 2048;
    let mut raw = search;
    let mut prev = 0.0;
    for k in 1..=samples {
        let xi = search * k as f64 / samples as f64;
        if !cap_ok(xi) {
            let (mut lo, mut hi) = (prev, xi);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if cap_ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            raw = lo;
            break;
        }
        prev = xi;
    }

    Ok(HypothesisReport {
        h1_smooth_assumed: true,
        h2_ellipticity: h2,
        h3_potential: h3,
        f_second_at_r0: f2,
        kappa_tilde: kt.value,
        kappa_tilde_vacuous: kt.h_prime_vanishes,
        xi_tilde: raw.min(s0),
        xi_tilde_raw: raw,
    })
}
