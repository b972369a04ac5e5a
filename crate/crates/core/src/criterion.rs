//! Vakhitov-Kolokolov slope `P'_kappa(0)` of the momentum along the soliton
//! branch, the closed form of the Gross-Pitaevskii case, and kappa sweeps.
//!
//! Sign convention: `P_kappa(c)` is the branch momentum of
//! [`TravelingWave::momentum`], which tends to `r0^2 pi` as `c -> 0`. A
//! negative slope at `c = 0` is the stability condition.

use crate::error::{invalid, Error, Result};
use crate::model::NonlinearModel;
use crate::numerics::{brent, integrate, QuadOptions};
use crate::profile::TravelingWave;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    IntegralFormula,
    BranchFiniteDifference,
    GPClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    StableSlope,
    UnstableSlope,
    Inconclusive,
}

impl Verdict {
    pub fn from_slope(p: f64, tolerance: f64) -> Self {
        if p < -tolerance {
            Verdict::StableSlope
        } else if p > tolerance {
            Verdict::UnstableSlope
        } else {
            Verdict::Inconclusive
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub p_prime_0: f64,
    pub method: Method,
    /// Half-width of the inconclusive band, 10x the error estimate.
    pub tolerance: f64,
    pub error_estimate: f64,
    pub verdict: Verdict,
    pub kappa: f64,
    pub model_id: String,
    /// Value from a second method, when one was run.
    pub cross_check: Option<f64>,
}

impl CriterionReport {
    fn new(model_id: String, kappa: f64, method: Method, p: f64, err: f64) -> Self {
        // a floor keeps the band meaningful when the estimate is zero
        let tolerance = 10.0 * err.max(1e-14 * (1.0 + p.abs()));
        CriterionReport {
            p_prime_0: p,
            method,
            tolerance,
            error_estimate: err,
            verdict: Verdict::from_slope(p, tolerance),
            kappa,
            model_id,
            cross_check: None,
        }
    }

    /// Whether two reports agree within their combined tolerances.
    pub fn agrees_with(&self, other: &CriterionReport) -> bool {
        (self.p_prime_0 - other.p_prime_0).abs() <= self.tolerance + other.tolerance
    }
}

/// `P'_kappa(0)` from the integral formula
/// `-8 r0^3 / (3 sqrt F(0)) + int_0^{r0} (r^2 - r0^2)^2 / r^2 (sqrt(nu(r^2)/F(r^2)) - 1/sqrt F(0)) dr`
/// with `r = r0 - t^2`.
pub fn vk_slope_integral(model: &NonlinearModel) -> Result<CriterionReport> {
    let hyp = model.check_hypotheses(256)?;
    if !hyp.h2_ellipticity.pass || !hyp.h3_potential.pass {
        return Err(Error::Hypothesis(format!(
            "H2/H3 fail for {} at kappa = {}",
            model.id(),
            model.kappa()
        )));
    }
    let r0 = model.r0();
    let s0 = model.r0_sq();
    let f0 = model.big_f(0.0);
    if !(f0 > 0.0) || !f0.is_finite() {
        return Err(Error::Hypothesis(format!("F(0) = {f0} must be positive")));
    }
    let inv_sqrt_f0 = 1.0 / f0.sqrt();
    let kappa = model.kappa();
    let integrand = |t: f64| -> f64 {
        let t2 = t * t;
        let r = r0 - t2;
        if r <= 0.0 {
            return 0.0;
        }
        let s = r * r;
        let xi = -t2 * (r + r0);
        let w = xi * xi / s;
        let big_f = model.big_f_dev(xi);
        let nu = model.nu(s);
        let root = (nu / big_f).sqrt();
        let paren = if s < 0.25 * s0 {
            // nu F(0) - F(s) without the O(1) cancellation
            let hp = model.h_prime(s);
            let num = model.int_f(0.0, s) + 2.0 * kappa * s * hp * hp * f0;
            num / (big_f * f0 * (root + inv_sqrt_f0))
        } else {
            root - inv_sqrt_f0
        };
        2.0 * t * w * paren
    };
    let q = integrate(integrand, 0.0, r0.sqrt(), QuadOptions::tol(1e-14, 1e-12))?;
    let constant = -8.0 * r0 * r0 * r0 / 3.0 * inv_sqrt_f0;
    let p = constant + q.value;
    if !p.is_finite() {
        return Err(Error::NonFinite("criterion integral".into()));
    }
    Ok(CriterionReport::new(
        model.id(),
        kappa,
        Method::IntegralFormula,
        p,
        q.error,
    ))
}

/// Branch momentum `P_kappa(c)` by quadrature along the branch.
pub fn branch_momentum(model: &NonlinearModel, c: f64) -> Result<f64> {
    TravelingWave::new(model, c)?.momentum()
}

/// `P'_kappa(0)` by Richardson extrapolation of `D(c) = (P_kappa(c) - r0^2 pi)/c`,
/// which is even in `c`: `D(0) ~ (4 D(h/2) - D(h))/3`. A second level with
/// `h/4` provides the error estimate.
pub fn vk_slope_branch_fd(model: &NonlinearModel, c_step: f64) -> Result<CriterionReport> {
    if !(c_step > 0.0) || !c_step.is_finite() {
        return Err(invalid(format!("c_step must be positive, got {c_step}")));
    }
    let base = PI * model.r0_sq();
    let d = |c: f64| -> Result<f64> { Ok((branch_momentum(model, c)? - base) / c) };
    let d1 = d(c_step)?;
    let d2 = d(0.5 * c_step)?;
    let d4 = d(0.25 * c_step)?;
    let a1 = (4.0 * d2 - d1) / 3.0;
    let a2 = (4.0 * d4 - d2) / 3.0;
    let p = (16.0 * a2 - a1) / 15.0;
    let err = (a2 - a1).abs() / 15.0 + 1e-12 * base / c_step;
    Ok(CriterionReport::new(
        model.id(),
        model.kappa(),
        Method::BranchFiniteDifference,
        p,
        err,
    ))
}

/// Runs both methods and stores the branch value as cross-check.
pub fn vk_slope_cross_checked(model: &NonlinearModel, c_step: f64) -> Result<CriterionReport> {
    let mut rep = vk_slope_integral(model)?;
    rep.cross_check = Some(vk_slope_branch_fd(model, c_step)?.p_prime_0);
    Ok(rep)
}

/// Value of the closed form at `kappa = 0` (the `kappa -> 0` limit at `c = 0`).
/// Convention-dependent: it is half the slope of [`vk_slope_integral`].
pub const GP_CLOSED_FORM_KAPPA_ZERO_LIMIT: f64 = -std::f64::consts::SQRT_2;

/// Closed-form slope of the Gross-Pitaevskii case `h = s`, `F = (1 - s)^2/2`,
/// for `kappa > -1/2`, `kappa != 0`, `0 <= c < sqrt 2`.
///
/// The `atan(sqrt|kappa| x)/sqrt|kappa|` form is only right for
/// `kappa < 0`; for `kappa > 0` its analytic continuation
/// `atanh(sqrt(kappa) x)/sqrt(kappa)` is used. With this choice the value is
/// exactly half of [`vk_slope_integral`] for every kappa and has the root
/// `kappa_0 ~ 3.636`; the all-`atan` form ([`gp_closed_form_slope_literal`])
/// stays negative for all `kappa > 0`.
pub fn gp_closed_form_slope(c: f64, kappa: f64) -> Result<f64> {
    check_gp_args(c, kappa)?;
    let x = ((2.0 - c * c) / (1.0 + 2.0 * kappa)).sqrt();
    let k = kappa.abs().sqrt();
    let arc = if kappa > 0.0 {
        (k * x).atanh() / k
    } else {
        (k * x).atan() / k
    };
    Ok(gp_assemble(c, kappa, arc))
}

/// The closed form exactly as printed, with `atan` and `|kappa|` for all
/// signs of kappa.
pub fn gp_closed_form_slope_literal(c: f64, kappa: f64) -> Result<f64> {
    check_gp_args(c, kappa)?;
    let x = ((2.0 - c * c) / (1.0 + 2.0 * kappa)).sqrt();
    let k = kappa.abs().sqrt();
    Ok(gp_assemble(c, kappa, (k * x).atan() / k))
}

fn check_gp_args(c: f64, kappa: f64) -> Result<()> {
    if !(kappa > -0.5) {
        return Err(invalid(format!("closed form needs kappa > -1/2, got {kappa}")));
    }
    if kappa == 0.0 {
        return Err(invalid(
            "closed form is singular at kappa = 0; its limit is -sqrt 2 (convention-dependent)",
        ));
    }
    if !(0.0..2f64.sqrt()).contains(&c) {
        return Err(invalid(format!("closed form needs 0 <= c < sqrt 2, got {c}")));
    }
    Ok(())
}

fn gp_assemble(c: f64, kappa: f64, arc_over_k: f64) -> f64 {
    let a = 2.0 - c * c;
    -(3.0 * c * c * kappa - 4.0 * kappa + 1.0) / 4.0 * arc_over_k - 0.75 * a * ((1.0 + 2.0 * kappa) / a).sqrt()
}

/// Root of `gp_closed_form_slope(0, kappa)` on `[1, 10]`.
pub fn find_kappa0() -> Result<f64> {
    brent(
        |k| gp_closed_form_slope(0.0, k).unwrap_or(f64::NAN),
        1.0,
        10.0,
        1e-12,
        200,
    )
}

/// One row of a kappa sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub p_prime_0: Option<f64>,
    pub verdict: Option<Verdict>,
    pub tolerance: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn from_result(kappa: f64, r: Result<CriterionReport>) -> Self {
        match r {
            Ok(rep) => SweepRow {
                kappa,
                p_prime_0: Some(rep.p_prime_0),
                verdict: Some(rep.verdict),
                tolerance: Some(rep.tolerance),
                error: None,
            },
            Err(e) => SweepRow {
                kappa,
                p_prime_0: None,
                verdict: None,
                tolerance: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Integral-formula slope for each kappa; failing rows record the error.
pub fn sweep_kappa(model: &NonlinearModel, kappas: &[f64]) -> Vec<SweepRow> {
    kappas
        .iter()
        .map(|&k| SweepRow::from_result(k, vk_slope_integral(&model.with_kappa(k))))
        .collect()
}

/// `n` evenly spaced values in `[a, b]`.
pub fn kappa_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}
