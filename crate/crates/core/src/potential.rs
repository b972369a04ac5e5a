//! Effective potential `V_c(xi) = c^2 xi^2 - 4 (r0^2 + xi) F(r0^2 + xi)` and the
//! dark/black branch root `xi(c)`.

use crate::error::{invalid, Error, Result};
use crate::model::{speed_of_sound, NonlinearModel};
use crate::numerics::brent;
use serde::{Deserialize, Serialize};

/// Default fraction of `c_s` above which profiles are refused.
pub const DEFAULT_SONIC_FRACTION: f64 = 0.95;

/// `V_c` for one model and speed.
#[derive(Debug, Clone)]
pub struct PotentialSlice<'a> {
    pub model: &'a NonlinearModel,
    pub c: f64,
    pub c_s: f64,
}

impl<'a> PotentialSlice<'a> {
    pub fn new(model: &'a NonlinearModel, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(invalid("speed must be finite"));
        }
        let c_s = speed_of_sound(model)?;
        Ok(Self { model, c, c_s })
    }

    /// `V_c(xi)`; `xi < -r0^2` is rejected.
    pub fn eval(&self, xi: f64) -> Result<f64> {
        potential_eval(self, xi)
    }

    #[inline]
    pub(crate) fn v(&self, xi: f64) -> f64 {
        let m = self.model.r0_sq() + xi;
        self.c * self.c * xi * xi - 4.0 * m * self.model.big_f_dev(xi)
    }

    /// `V_c'(xi) = 2 c^2 xi - 4 F + 4 (r0^2 + xi) f`.
    #[inline]
    pub fn derivative(&self, xi: f64) -> f64 {
        let s = self.model.r0_sq() + xi;
        2.0 * self.c * self.c * xi - 4.0 * self.model.big_f_dev(xi) + 4.0 * s * self.model.f(s)
    }

    /// `V_c''(xi) = 2 c^2 + 8 f + 4 (r0^2 + xi) f'`.
    #[inline]
    pub fn second_derivative(&self, xi: f64) -> f64 {
        let s = self.model.r0_sq() + xi;
        2.0 * self.c * self.c + 8.0 * self.model.f(s) + 4.0 * s * self.model.f_prime(s)
    }

    /// `V_c'''(xi) = 12 f' + 4 (r0^2 + xi) f''`.
    #[inline]
    pub fn third_derivative(&self, xi: f64) -> f64 {
        let s = self.model.r0_sq() + xi;
        12.0 * self.model.f_prime(s) + 4.0 * s * self.model.f_dprime(s)
    }
}

pub fn potential_eval(slice: &PotentialSlice<'_>, xi: f64) -> Result<f64> {
    let s0 = slice.model.r0_sq();
    if !xi.is_finite() {
        return Err(invalid("xi must be finite"));
    }
    if xi < -s0 * (1.0 + 1e-15) {
        return Err(invalid(format!(
            "xi = {xi} < -r0^2 makes the squared amplitude negative"
        )));
    }
    Ok(slice.v(xi.max(-s0)))
}

/// The simple root `xi(c)` of the dark/black branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchRoot {
    pub c: f64,
    pub xi_c: f64,
    pub vc_prime_at_root: f64,
    pub valid: bool,
    /// Numerical surrogate for the continuation half-width: the largest sampled
    /// speed up to the near-sonic limit at which the root is simple and the
    /// ellipticity holds on `[xi(c), 0]`.
    pub delta_estimate: f64,
}

impl BranchRoot {
    /// Minimum modulus `mu_c = sqrt(r0^2 + xi(c))`.
    pub fn mu(&self, model: &NonlinearModel) -> f64 {
        (model.r0_sq() + self.xi_c).max(0.0).sqrt()
    }
}

/// Options for [`branch_root_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchOptions {
    /// Speeds above `sonic_fraction * c_s` are refused.
    pub sonic_fraction: f64,
    /// Compute `delta_estimate` (a 32-point scan over `c`).
    pub estimate_delta: bool,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            sonic_fraction: DEFAULT_SONIC_FRACTION,
            estimate_delta: true,
        }
    }
}

pub fn branch_root(model: &NonlinearModel, c: f64) -> Result<BranchRoot> {
    branch_root_with(model, c, BranchOptions::default())
}

pub fn branch_root_with(model: &NonlinearModel, c: f64, opts: BranchOptions) -> Result<BranchRoot> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(invalid(format!("speed must be finite and non-negative, got {c}")));
    }
    let c_s = speed_of_sound(model)?;
    if c >= c_s {
        return Err(Error::NoTravelingWave { c, c_s });
    }
    let limit = opts.sonic_fraction * c_s;
    if c > limit {
        return Err(Error::NearSonic {
            c,
            limit,
            fraction: opts.sonic_fraction,
        });
    }
    let mut root = locate_root(model, c, c_s)?;
    if opts.estimate_delta {
        root.delta_estimate = estimate_delta(model, c_s, limit);
    }
    Ok(root)
}

fn ellipticity_on(model: &NonlinearModel, xi_c: f64) -> bool {
    let s0 = model.r0_sq();
    (0..=64).all(|k| model.nu(s0 + xi_c * k as f64 / 64.0) > 0.0)
}

fn estimate_delta(model: &NonlinearModel, c_s: f64, limit: f64) -> f64 {
    let mut best = 0.0;
    for k in 1..=32 {
        let c = limit * k as f64 / 32.0;
        match locate_root(model, c, c_s) {
            Ok(r) if r.valid => best = c,
            _ => break,
        }
    }
    best
}

fn locate_root(model: &NonlinearModel, c: f64, c_s: f64) -> Result<BranchRoot> {
    let s0 = model.r0_sq();
    let slice = PotentialSlice { model, c, c_s };
    if c == 0.0 {
        let xi_c = -s0;
        let ok = ellipticity_on(model, xi_c);
        return Ok(BranchRoot {
            c,
            xi_c,
            vc_prime_at_root: slice.derivative(xi_c),
            valid: ok && model.big_f(0.0) > 0.0,
            delta_estimate: 0.0,
        });
    }
    // Sweep leftward from near 0: samples are geometric toward 0 and toward -r0^2.
    let nodes = sweep_nodes(s0);
    let mut prev = nodes[0];
    if !(slice.v(prev) < 0.0) {
        return Err(Error::UnsupportedStructure(format!(
            "V_c is not negative just left of 0 at c = {c}"
        )));
    }
    let mut bracket = None;
    for &xi in &nodes[1..] {
        let v = slice.v(xi);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("V_c({xi})")));
        }
        if v >= 0.0 {
            bracket = Some((xi, prev));
            break;
        }
        prev = xi;
    }
    let (lo, hi) = match bracket {
        Some(b) => b,
        None => {
            // V_c(-r0^2) = c^2 r0^4 > 0, so this only happens through rounding
            (-s0, prev)
        }
    };
    let mut xi = brent(|t| slice.v(t), lo, hi, 1e-15 * s0.max(1.0), 200)?;
    // Newton polish
    for _ in 0..3 {
        let d = slice.derivative(xi);
        if d == 0.0 {
            break;
        }
        let step = slice.v(xi) / d;
        let cand = xi - step;
        if cand > lo && cand < hi {
            xi = cand;
        }
        if step.abs() < 1e-17 {
            break;
        }
    }
    let d = slice.derivative(xi);
    if !(d < 0.0) {
        return Err(Error::UnsupportedStructure(format!(
            "root xi = {xi} at c = {c} is not simple with V_c' < 0 (V_c' = {d:e})"
        )));
    }
    Ok(BranchRoot {
        c,
        xi_c: xi,
        vc_prime_at_root: d,
        valid: ellipticity_on(model, xi),
        delta_estimate: 0.0,
    })
}

fn sweep_nodes(s0: f64) -> Vec<f64> {
    // -xi runs over (1e-12 s0, s0): geometric near 0, then uniform in the
    // middle, then geometric toward -s0.
    let mut t: Vec<f64> = Vec::new();
    for k in 0..=60 {
        t.push(1e-12 * 10f64.powf(k as f64 * 11.0 / 60.0)); // 1e-12 .. 0.1
    }
    for k in 1..400 {
        t.push(0.1 + 0.8 * k as f64 / 400.0);
    }
    for k in 0..=60 {
        t.push(1.0 - 0.1 * 10f64.powf(-(k as f64) * 11.0 / 60.0)); // 0.9 .. 1 - 1e-12
    }
    t.push(1.0);
    t.into_iter().map(|u| -u * s0).collect()
}

/// Existence of nontrivial dark/black traveling waves at speed `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Existence {
    TrivialOnly,
    KinkExists,
    GraySolitonExists,
    /// A solution may exist but lies outside the family handled here (bubbles,
    /// non-simple roots, near-sonic speeds or failed hypotheses).
    Unsupported,
}

pub fn classify_existence(model: &NonlinearModel, c: f64) -> Existence {
    let c_s = match speed_of_sound(model) {
        Ok(v) => v,
        Err(_) => return Existence::Unsupported,
    };
    let ca = c.abs();
    if ca > c_s || !c.is_finite() {
        return Existence::TrivialOnly;
    }
    if ca == c_s {
        return Existence::TrivialOnly;
    }
    let hyp = match model.check_hypotheses(256) {
        Ok(h) => h,
        Err(_) => return Existence::Unsupported,
    };
    if !hyp.all_pass() {
        return Existence::Unsupported;
    }
    let opts = BranchOptions {
        sonic_fraction: 1.0,
        estimate_delta: false,
    };
    match branch_root_with(model, ca, opts) {
        Ok(r) if r.valid && ca == 0.0 => Existence::KinkExists,
        Ok(r) if r.valid => Existence::GraySolitonExists,
        _ => Existence::Unsupported,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, BuiltinCase};
    use proptest::prelude::*;

    fn gp1() -> NonlinearModel {
        builtin_model(BuiltinCase::Gp1, 1.0, 0.0).unwrap()
    }

    #[test]
    fn potential_examples() {
        let m = gp1();
        let s = PotentialSlice::new(&m, 0.0).unwrap();
        assert!((s.eval(-0.5).unwrap() + 0.25).abs() < 1e-15);
        for case in BuiltinCase::ALL {
            let m = builtin_model(case, 1.0, 0.4).unwrap();
            let s = PotentialSlice::new(&m, 0.3).unwrap();
            assert_eq!(s.eval(0.0).unwrap(), 0.0);
            assert!((s.eval(-1.0).unwrap() - 0.09).abs() < 1e-15);
        }
        let m = builtin_model(BuiltinCase::Sf3, 2.0, 0.0).unwrap();
        let s = PotentialSlice::new(&m, 0.3).unwrap();
        assert!((s.eval(-4.0).unwrap() - 0.09 * 16.0).abs() < 1e-12);
        assert!(s.eval(-4.1).is_err());
    }

    #[test]
    fn root_examples() {
        let m = gp1();
        assert_eq!(branch_root(&m, 0.0).unwrap().xi_c, -1.0);
        let r = branch_root(&m, 1.0).unwrap();
        assert!((r.xi_c + 0.5).abs() < 1e-14, "{}", r.xi_c);
        assert!(r.vc_prime_at_root < 0.0 && r.valid);
        assert!(r.delta_estimate > 1.0);
        assert!(matches!(branch_root(&m, 1.5), Err(Error::NoTravelingWave { .. })));
        assert!(matches!(branch_root(&m, 1.4), Err(Error::NearSonic { .. })));
    }

    #[test]
    fn classification_examples() {
        let m = gp1();
        assert_eq!(classify_existence(&m, 0.0), Existence::KinkExists);
        assert_eq!(classify_existence(&m, 0.7), Existence::GraySolitonExists);
        assert_eq!(classify_existence(&m, 2.0), Existence::TrivialOnly);
        assert_eq!(classify_existence(&m.with_kappa(-0.7), 0.3), Existence::Unsupported);
    }

    #[test]
    fn taylor_at_background() {
        for case in BuiltinCase::ALL {
            let m = builtin_model(case, 1.0, 0.0).unwrap();
            let s = PotentialSlice::new(&m, 0.5).unwrap();
            let xi = 1e-4;
            let ratio = s.eval(xi).unwrap() / (xi * xi);
            let want = 0.25 - s.c_s * s.c_s;
            assert!((ratio - want).abs() < 1e-3, "{case:?} {ratio} {want}");
        }
    }

    #[test]
    fn mu_increases_with_speed() {
        for case in BuiltinCase::ALL {
            let m = builtin_model(case, 1.0, 0.5).unwrap();
            let c_s = speed_of_sound(&m).unwrap();
            let mut last = -1.0;
            for k in 0..=20 {
                let c = 0.5 * c_s * k as f64 / 20.0;
                let mu = branch_root(&m, c).unwrap().mu(&m);
                assert!(mu > last);
                last = mu;
            }
        }
    }

    proptest! {
        #[test]
        fn implicit_derivative_relation(case_ix in 0usize..3, kappa in 0.0f64..3.0, frac in 0.05f64..0.8) {
            let m = builtin_model(BuiltinCase::ALL[case_ix], 1.0, kappa).unwrap();
            let c_s = speed_of_sound(&m).unwrap();
            let c = frac * c_s;
            let opts = BranchOptions { estimate_delta: false, ..Default::default() };
            let h = 1e-5;
            let r = branch_root_with(&m, c, opts).unwrap();
            let rp = branch_root_with(&m, c + h, opts).unwrap();
            let rm = branch_root_with(&m, c - h, opts).unwrap();
            let dxi = (rp.xi_c - rm.xi_c) / (2.0 * h);
            let res = 2.0 * c * r.xi_c * r.xi_c + r.vc_prime_at_root * dxi;
            prop_assert!(res.abs() < 1e-5, "residual {}", res);
            // negative between the root and 0
            let s = PotentialSlice::new(&m, c).unwrap();
            for k in 1..50 {
                prop_assert!(s.eval(r.xi_c * k as f64 / 50.0).unwrap() < 0.0);
            }
        }
    }
}
