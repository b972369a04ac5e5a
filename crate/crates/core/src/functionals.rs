//! Conserved functionals, the Lyapunov functional, distances on the energy
//! space, pathology probes and the constrained comparison profiles.
//!
//! All spatial derivatives use the fourth-order operator `D` of
//! [`crate::numerics::fd`], and integrals are plain `dx`-weighted sums. The
//! discrete energy defined here is exactly the one conserved by the
//! evolution scheme.

use crate::error::{invalid, Error, Result};
use crate::field::{BoundaryKind, FieldState, Grid};
use crate::model::NonlinearModel;
use crate::numerics::fd::d1;
use crate::numerics::golden_section_min;
use crate::profile::{gray_profile, SolitonProfile};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Discrete energy density `|Dv|^2 + F(|v|^2) + (kappa/2) (D h(|v|^2))^2`.
pub fn energy_density(field: &FieldState, model: &NonlinearModel) -> Vec<f64> {
    let dx = field.grid.dx;
    let bc = field.boundary;
    let s0 = model.r0_sq();
    let du = d1(&field.values, dx, bc);
    let kappa = model.kappa();
    let dh = if kappa != 0.0 {
        let h: Vec<f64> = field.values.iter().map(|v| model.h(v.norm_sqr())).collect();
        d1(&h, dx, bc)
    } else {
        Vec::new()
    };
    (0..field.len())
        .map(|j| {
            let v = field.values[j];
            let mut e = du[j].norm_sqr() + model.big_f_dev(v.norm_sqr() - s0);
            if kappa != 0.0 {
                e += 0.5 * kappa * dh[j] * dh[j];
            }
            e
        })
        .collect()
}

/// Pointwise density with the chain rule `D h(|v|^2) = 2 h' Re(conj(v) Dv)`;
/// equals `nu rho'^2 + rho^2 theta'^2 + F` sample by sample.
pub fn energy_density_chain(field: &FieldState, model: &NonlinearModel) -> Vec<f64> {
    let du = d1(&field.values, field.grid.dx, field.boundary);
    let s0 = model.r0_sq();
    let kappa = model.kappa();
    (0..field.len())
        .map(|j| {
            let v = field.values[j];
            let s = v.norm_sqr();
            let ds = 2.0 * (v.conj() * du[j]).re;
            let dh = model.h_prime(s) * ds;
            du[j].norm_sqr() + model.big_f_dev(s - s0) + 0.5 * kappa * dh * dh
        })
        .collect()
}

/// Discrete energy `E_kappa`.
pub fn energy(field: &FieldState, model: &NonlinearModel) -> f64 {
    field.grid.dx * energy_density(field, model).iter().sum::<f64>()
}

/// Energy and a quadrature error estimate `|E_h - E_2h| / 15`, where `E_2h`
/// uses every other sample.
pub fn energy_with_error(field: &FieldState, model: &NonlinearModel) -> (f64, f64) {
    let e = energy(field, model);
    if field.len() < 32 {
        return (e, f64::NAN);
    }
    let coarse: Vec<Complex64> = field.values.iter().step_by(2).copied().collect();
    let grid = Grid {
        x0: field.grid.x0,
        dx: 2.0 * field.grid.dx,
        n: coarse.len(),
    };
    let cf = FieldState {
        grid,
        values: coarse,
        r0: field.r0,
        boundary: field.boundary,
    };
    let e2 = energy(&cf, model);
    (e, (e - e2).abs() / 15.0)
}

/// Renormalized momentum `int Re(i Dv conj v) (1 - r0^2/|v|^2)`; requires a
/// nonvanishing field.
pub fn momentum_renormalized(field: &FieldState) -> Result<f64> {
    let mm = field.min_modulus();
    if !(mm > 1e-10 * field.r0) {
        return Err(Error::VanishingField { min_modulus: mm });
    }
    let du = d1(&field.values, field.grid.dx, field.boundary);
    let s0 = field.r0 * field.r0;
    let i = Complex64::i();
    let sum: f64 = field
        .values
        .iter()
        .zip(&du)
        .map(|(v, d)| (i * d * v.conj()).re * (1.0 - s0 / v.norm_sqr()))
        .sum();
    Ok(field.grid.dx * sum)
}

/// Untwisted momentum in `[0, 2 pi r0^2)`:
/// `int Re(i Dv conj v) + r0^2 (arg v(X) - arg v(-X))`, reduced mod
/// `2 pi r0^2`. The reduction makes the endpoint branch choice irrelevant.
pub fn momentum_untwisted(field: &FieldState) -> Result<f64> {
    let n = field.len();
    let r0 = field.r0;
    let (a, b) = (field.values[0], field.values[n - 1]);
    let m = a.norm().min(b.norm());
    if !(m >= 0.5 * r0) {
        return Err(Error::EndpointModulus { modulus: m });
    }
    for j in 0..n - 1 {
        let (u, w) = (field.values[j], field.values[j + 1]);
        if u.norm() >= 0.1 * r0 && w.norm() >= 0.1 * r0 {
            let jump = (w / u).arg().abs();
            if jump > 0.5 * PI {
                return Err(Error::Resolution {
                    x: field.grid.x(j),
                    jump,
                });
            }
        }
    }
    let du = d1(&field.values, field.grid.dx, field.boundary);
    let i = Complex64::i();
    let integral: f64 = field
        .values
        .iter()
        .zip(&du)
        .map(|(v, d)| (i * d * v.conj()).re)
        .sum::<f64>()
        * field.grid.dx;
    let s0 = r0 * r0;
    let total = integral + s0 * (b.arg() - a.arg());
    let period = 2.0 * PI * s0;
    let mut p = total.rem_euclid(period);
    // rounding just below a multiple of the period is treated as zero
    if p >= period * (1.0 - 1e-13) {
        p = 0.0;
    }
    Ok(p)
}

/// `L = E + 2 M r0^4 sin^2((P_untwisted - r0^2 pi) / (2 r0^2))`.
pub fn lyapunov(field: &FieldState, model: &NonlinearModel, m: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(invalid(format!("Lyapunov weight M must be positive, got {m}")));
    }
    let e = energy(field, model);
    let p = momentum_untwisted(field)?;
    Ok(lyapunov_from(e, p, model.r0_sq(), m))
}

pub fn lyapunov_from(energy: f64, p_untwisted: f64, r0_sq: f64, m: f64) -> f64 {
    let s = ((p_untwisted - r0_sq * PI) / (2.0 * r0_sq)).sin();
    energy + 2.0 * m * r0_sq * r0_sq * s * s
}

/// Values of the functionals for one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub energy: f64,
    pub quadrature_error: f64,
    /// `None` for vanishing fields.
    pub momentum_renormalized: Option<f64>,
    pub momentum_untwisted: Option<f64>,
    pub lyapunov: Option<f64>,
    pub lyapunov_m: Option<f64>,
    pub min_modulus: f64,
    /// `d_X` to the reference field, when one is given.
    pub distance_dx: Option<f64>,
}

pub fn functional_report(
    field: &FieldState,
    model: &NonlinearModel,
    m: Option<f64>,
    reference: Option<&FieldState>,
) -> Result<FunctionalReport> {
    let (e, err) = energy_with_error(field, model);
    let pu = momentum_untwisted(field).ok();
    let lyap = match (m, pu) {
        (Some(m), Some(p)) => {
            if !(m > 0.0) {
                return Err(invalid("Lyapunov weight M must be positive"));
            }
            Some(lyapunov_from(e, p, model.r0_sq(), m))
        }
        _ => None,
    };
    let distance_dx = match reference {
        Some(r) => Some(distance_dx(field, r)?),
        None => None,
    };
    Ok(FunctionalReport {
        energy: e,
        quadrature_error: err,
        momentum_renormalized: momentum_renormalized(field).ok(),
        momentum_untwisted: pu,
        lyapunov: lyap,
        lyapunov_m: m,
        min_modulus: field.min_modulus(),
        distance_dx,
    })
}

fn derivative_gap(a: &FieldState, b: &FieldState) -> f64 {
    let da = d1(&a.values, a.grid.dx, a.boundary);
    let db = d1(&b.values, b.grid.dx, b.boundary);
    da.iter().zip(&db).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * a.grid.dx
}

fn modulus_gap(a: &FieldState, b: &FieldState) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x.norm() - y.norm()).powi(2))
        .sum::<f64>()
        * a.grid.dx
}

/// `d_X(a, b)`; the point term uses the grid node nearest `x = 0`.
pub fn distance_dx(a: &FieldState, b: &FieldState) -> Result<f64> {
    a.check_same_grid(b)?;
    let j = a.grid.origin_index();
    let point = (a.values[j] - b.values[j]).norm_sqr();
    Ok((derivative_gap(a, b) + modulus_gap(a, b) + point).sqrt())
}

/// Zhidkov-type `d_inf(a, b)`: the point term of `d_X` replaced by a sup.
pub fn distance_dinf(a: &FieldState, b: &FieldState) -> Result<f64> {
    a.check_same_grid(b)?;
    let sup = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).norm_sqr())
        .fold(0.0, f64::max);
    Ok((derivative_gap(a, b) + modulus_gap(a, b) + sup).sqrt())
}

/// Weight of the local `L^2` term in `d_0`.
#[inline]
pub fn d0_weight(x: f64) -> f64 {
    1.0 / (1.0 + x * x * x * x)
}

/// Smooth distance `d_0(a, b)`.
pub fn distance_d0(a: &FieldState, b: &FieldState) -> Result<f64> {
    a.check_same_grid(b)?;
    let dx = a.grid.dx;
    let mut sq = 0.0;
    let mut wl2 = 0.0;
    for j in 0..a.len() {
        let (u, v) = (a.values[j], b.values[j]);
        sq += (u.norm_sqr() - v.norm_sqr()).powi(2);
        wl2 += d0_weight(a.grid.x(j)) * (u - v).norm_sqr();
    }
    Ok((derivative_gap(a, b) + dx * (sq + wl2)).sqrt())
}

/// Continuous constant `K` of the pointwise bound
/// `e(v) >= (|v'|^2 + (|v|^2 - r0^2)^2) / K` for `|v|^2 <= r0^2 + xi_tilde`:
/// `K = 1 / min(1, inf nu, inf F(s)/(s - r0^2)^2)`.
pub fn pointwise_energy_constant(model: &NonlinearModel) -> Result<f64> {
    let hyp = model.check_hypotheses(512)?;
    if !hyp.all_pass() {
        return Err(Error::Hypothesis("H2-H3 must hold for the pointwise bound".into()));
    }
    let s0 = model.r0_sq();
    let top = s0 + hyp.xi_tilde;
    let n = 4000;
    let mut nu_min = f64::INFINITY;
    let mut f_min = f64::INFINITY;
    for k in 0..=n {
        let s = top * k as f64 / n as f64;
        nu_min = nu_min.min(model.nu(s));
        let d = s - s0;
        if d.abs() > 1e-6 * s0 {
            f_min = f_min.min(model.big_f_dev(d) / (d * d));
        }
    }
    // the ratio tends to -f'(r0^2)/2 at the background
    f_min = f_min.min(-0.5 * model.f_prime(s0));
    let k = 1.0 / nu_min.min(1.0).min(f_min);
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Hypothesis(format!("pointwise constant degenerate: {k}")));
    }
    Ok(k)
}

/// Which hypothesis a pathology probe violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathologyKind {
    /// `F(r^2) < 0` for some `r`: twisted plateau of length `n`.
    NegativeF,
    /// `nu(r^2) < 0` for some `r`: oscillating plateau with `n` periods.
    NegativeEllipticity,
}

/// Plateau level and oscillation half-amplitude chosen for a probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeLevel {
    pub r: f64,
    pub delta: f64,
}

/// Searches `r^2 in (0, 2 r0^2]` for the chosen violation: takes the longest
/// sampled run where it holds (runs are split at `r0`), `r` at its midpoint
/// and `delta` = 40% of its length.
pub fn probe_level(model: &NonlinearModel, kind: PathologyKind) -> Result<ProbeLevel> {
    let r0 = model.r0();
    let viol = |r: f64| {
        let s = r * r;
        match kind {
            PathologyKind::NegativeF => model.big_f(s) < 0.0,
            PathologyKind::NegativeEllipticity => model.nu(s) < 0.0,
        }
    };
    let n = 4000;
    let mut best: Option<(f64, f64)> = None;
    let mut start: Option<f64> = None;
    let mut prev_r = 0.0;
    for k in 1..=n {
        let r = 2f64.sqrt() * r0 * k as f64 / n as f64;
        let crossing = prev_r < r0 && r >= r0;
        let v = viol(r) && (r - r0).abs() > 1e-9;
        if let Some(s) = start {
            if !v || crossing {
                let run = (s, prev_r);
                if best.map_or(true, |b| run.1 - run.0 > b.1 - b.0) {
                    best = Some(run);
                }
                start = None;
            }
        }
        if v && start.is_none() {
            start = Some(r);
        }
        prev_r = r;
    }
    if let Some(s) = start {
        let run = (s, prev_r);
        if best.map_or(true, |b| run.1 - run.0 > b.1 - b.0) {
            best = Some(run);
        }
    }
    match best {
        Some((a, b)) if b > a => Ok(ProbeLevel {
            r: 0.5 * (a + b),
            delta: 0.4 * (b - a),
        }),
        _ => Err(Error::Hypothesis(format!(
            "no {} violation found for r^2 in (0, 2 r0^2]",
            match kind {
                PathologyKind::NegativeF => "F < 0",
                PathologyKind::NegativeEllipticity => "nu < 0",
            }
        ))),
    }
}

/// Builds the probe `v_n = rho_n e^{i theta_n}` whose renormalized momentum
/// is `p_target` and whose energy diverges to `-inf` as `n` grows.
///
/// The ramp on `(0, 1)` is `rho = r0 + (r - r0) x` with phase `C x`, and
/// `int_0^1 (r0^2 - rho^2) dx = -(r - r0)(r + 2 r0)/3`, so
/// `C = -3 p / ((r - r0)(r + 2 r0))`.
pub fn pathology_probe(model: &NonlinearModel, kind: PathologyKind, p_target: f64, n: usize) -> Result<FieldState> {
    if n < 2 {
        return Err(invalid("probe index n must be at least 2"));
    }
    if !p_target.is_finite() {
        return Err(invalid("target momentum must be finite"));
    }
    let lvl = probe_level(model, kind)?;
    let r0 = model.r0();
    let r = lvl.r;
    let c = -3.0 * p_target / ((r - r0) * (r + 2.0 * r0));
    let nf = n as f64;
    let (end, per_unit) = match kind {
        PathologyKind::NegativeF => (nf + 1.0, 64usize),
        PathologyKind::NegativeEllipticity => (3.0, 64 * n),
    };
    // integer breakpoints land on nodes
    let dx = 1.0 / per_unit as f64;
    let x0 = -2.0;
    let count = ((end + 2.0 - x0) * per_unit as f64).round() as usize + 1;
    let grid = Grid { x0, dx, n: count };
    let delta = lvl.delta;
    let rho = |x: f64| -> f64 {
        match kind {
            PathologyKind::NegativeF => {
                if x <= 0.0 || x >= nf + 1.0 {
                    r0
                } else if x < 1.0 {
                    r0 + (r - r0) * x
                } else if x <= nf {
                    r
                } else {
                    (r - r0) * (nf - x) + r
                }
            }
            PathologyKind::NegativeEllipticity => {
                if x <= 0.0 || x >= 3.0 {
                    r0
                } else if x < 1.0 {
                    r0 + (r - r0) * x
                } else if x <= 2.0 {
                    r + delta * (2.0 * PI * nf * x).sin()
                } else {
                    (r0 - r) * (x - 2.0) + r
                }
            }
        }
    };
    let theta = |x: f64| -> f64 { x.clamp(0.0, 1.0) };
    let build = |c: f64| -> Result<FieldState> {
        let values = (0..grid.n)
            .map(|j| {
                let x = x0 + j as f64 * dx;
                Complex64::from_polar(rho(x), c * theta(x))
            })
            .collect();
        FieldState::new(grid, values, r0, BoundaryKind::Background)
    };
    // the continuum C misses the discrete momentum by O(dx^2) at the kinks;
    // a few secant steps make the discrete value exact
    let mut ca = c;
    let mut field = build(ca)?;
    let mut pa = momentum_renormalized(&field)? - p_target;
    let mut cb = c * (1.0 + 1e-3) + 1e-6;
    for _ in 0..20 {
        if pa.abs() <= 1e-13 * (1.0 + p_target.abs()) {
            break;
        }
        let fb = build(cb)?;
        let pb = momentum_renormalized(&fb)? - p_target;
        if pb == pa {
            break;
        }
        let next = cb - pb * (cb - ca) / (pb - pa);
        ca = cb;
        pa = pb;
        field = fb;
        cb = next;
    }
    Ok(field)
}

/// Speed `c(mu) = 2 mu sqrt(F(mu^2)) / (r0^2 - mu^2)` of the gray soliton with
/// minimum modulus `mu`.
pub fn constrained_speed(model: &NonlinearModel, mu: f64) -> Result<f64> {
    let s0 = model.r0_sq();
    if !(mu > 0.0) || mu * mu >= s0 {
        return Err(invalid(format!("mu must lie in (0, r0), got {mu}")));
    }
    let f = model.big_f(mu * mu);
    if !(f > 0.0) {
        return Err(Error::Hypothesis(format!("F(mu^2) = {f} is not positive")));
    }
    Ok(2.0 * mu * f.sqrt() / (s0 - mu * mu))
}

/// Gray soliton tails glued to a plateau of modulus `mu` on `(-R, R)`.
#[derive(Debug, Clone)]
pub struct ConstrainedProfile {
    pub mu: f64,
    pub r_plateau: f64,
    pub c: f64,
    /// Phase slope on the plateau, `c (mu^2 - r0^2) / (2 mu^2)`.
    pub phase_slope: f64,
    pub field: FieldState,
}

/// Default cap `mu <= 0.2 r0`.
pub const DEFAULT_MU_CAP_FRACTION: f64 = 0.2;

/// Builds the constrained profile from an already computed gray soliton of
/// speed `c(mu)` on an arbitrary grid.
pub fn constrained_from_gray(gray: &SolitonProfile, r_plateau: f64, grid: Grid) -> Result<ConstrainedProfile> {
    if !(r_plateau >= 0.0) || !r_plateau.is_finite() {
        return Err(invalid(format!("plateau half-width must be >= 0, got {r_plateau}")));
    }
    let model = &gray.model;
    let mu = gray.mu_c;
    let c = gray.c;
    let slope = c * (mu * mu - model.r0_sq()) / (2.0 * mu * mu);
    let big_r = r_plateau;
    let right_rot = Complex64::from_polar(1.0, 2.0 * slope * big_r);
    let values = (0..grid.n)
        .map(|j| {
            let x = grid.x(j);
            if x <= -big_r {
                gray.eval(x + big_r)
            } else if x < big_r {
                Complex64::from_polar(mu, slope * (x + big_r))
            } else {
                gray.eval(x - big_r) * right_rot
            }
        })
        .collect();
    Ok(ConstrainedProfile {
        mu,
        r_plateau,
        c,
        phase_slope: slope,
        field: FieldState::new(grid, values, model.r0(), BoundaryKind::Background)?,
    })
}

pub fn constrained_profile(
    model: &NonlinearModel,
    mu: f64,
    r_plateau: f64,
    x_max: f64,
    n: usize,
) -> Result<ConstrainedProfile> {
    constrained_profile_capped(model, mu, r_plateau, x_max, n, DEFAULT_MU_CAP_FRACTION)
}

pub fn constrained_profile_capped(
    model: &NonlinearModel,
    mu: f64,
    r_plateau: f64,
    x_max: f64,
    n: usize,
    mu_cap_fraction: f64,
) -> Result<ConstrainedProfile> {
    if mu > mu_cap_fraction * model.r0() {
        return Err(invalid(format!("mu = {mu} above the cap {} r0", mu_cap_fraction)));
    }
    let c = constrained_speed(model, mu)?;
    let gray = gray_profile(model, c, x_max, 128.max(n.min(4096)))?;
    let grid = Grid::symmetric(x_max, n)?;
    constrained_from_gray(&gray, r_plateau, grid)
}

/// Result of scanning `R -> L(v_R)` over constrained profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScan {
    pub mu: f64,
    pub c: f64,
    pub m: f64,
    pub r_values: Vec<f64>,
    pub l_values: Vec<f64>,
    pub r_star: f64,
    pub l_min: f64,
}

/// Scans `R in [0, r_max]` on `samples` points, then refines the best
/// bracket by golden section.
pub fn plateau_scan(
    model: &NonlinearModel,
    mu: f64,
    m: f64,
    r_max: f64,
    samples: usize,
    x_max: f64,
    dx: f64,
) -> Result<PlateauScan> {
    if samples < 3 || !(r_max > 0.0) || !(dx > 0.0) {
        return Err(invalid("plateau scan needs samples >= 3, r_max > 0, dx > 0"));
    }
    let c = constrained_speed(model, mu)?;
    let gray = gray_profile(model, c, x_max, 1024)?;
    let n = (2.0 * x_max / dx).round() as usize + 1;
    let grid = Grid::symmetric(x_max, n)?;
    let eval = |big_r: f64| -> Result<f64> {
        let cp = constrained_from_gray(&gray, big_r, grid)?;
        lyapunov(&cp.field, model, m)
    };
    let mut r_values = Vec::with_capacity(samples);
    let mut l_values = Vec::with_capacity(samples);
    for k in 0..samples {
        let r = r_max * k as f64 / (samples - 1) as f64;
        r_values.push(r);
        l_values.push(eval(r)?);
    }
    let (kbest, _) = l_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &l)| if l < acc.1 { (k, l) } else { acc });
    let lo = r_values[kbest.saturating_sub(1)];
    let hi = r_values[(kbest + 1).min(samples - 1)];
    let (mut r_star, mut l_min) = (r_values[kbest], l_values[kbest]);
    if hi > lo {
        let (xr, fr) = golden_section_min(|r| eval(r).unwrap_or(f64::INFINITY), lo, hi, 1e-3 * (hi - lo));
        if fr < l_min {
            r_star = xr;
            l_min = fr;
        }
    }
    Ok(PlateauScan {
        mu,
        c,
        m,
        r_values,
        l_values,
        r_star,
        l_min,
    })
}

/// Triangle wave `chi(y) = max(0, 1 - |y|)`.
#[inline]
pub fn triangle(y: f64) -> f64 {
    (1.0 - y.abs()).max(0.0)
}

/// `v_n = exp(i chi(n + x/n))` with `points_per_unit` samples per unit
/// length, on a grid covering the bump at `x = -n^2` and the origin; the
/// breakpoints of `chi` fall on nodes.
pub fn triangle_wave_field(n: usize, points_per_unit: usize) -> Result<(FieldState, FieldState)> {
    if n < 1 || points_per_unit < 1 {
        return Err(invalid("triangle wave needs n >= 1 and a positive resolution"));
    }
    let nf = n as f64;
    let dx = 1.0 / points_per_unit as f64;
    let x0 = -(nf * nf) - 2.0 * nf - 2.0;
    let count = ((2.0 - x0) * points_per_unit as f64).round() as usize + 1;
    let grid = Grid { x0, dx, n: count };
    let xs = |j: usize| x0 + j as f64 * dx;
    let v = FieldState::new(
        grid,
        (0..count)
            .map(|j| Complex64::from_polar(1.0, triangle(nf + xs(j) / nf)))
            .collect(),
        1.0,
        BoundaryKind::Background,
    )?;
    let one = FieldState::new(
        grid,
        vec![Complex64::new(1.0, 0.0); count],
        1.0,
        BoundaryKind::Background,
    )?;
    Ok((v, one))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, BuiltinCase};
    use crate::numerics::integrate_default;
    use crate::profile::{default_grid, kink_profile, TravelingWave};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gp1(kappa: f64) -> NonlinearModel {
        builtin_model(BuiltinCase::Gp1, 1.0, kappa).unwrap()
    }

    fn kink_field(m: &NonlinearModel) -> FieldState {
        let (x, n) = default_grid(m, 0.0).unwrap();
        kink_profile(m, x, n).unwrap().field()
    }

    #[test]
    fn constant_field_values() {
        let m = gp1(0.7);
        let g = Grid::symmetric(20.0, 512).unwrap();
        let f = FieldState::constant(g, 1.0, 0.4).unwrap();
        assert!(energy(&f, &m).abs() < 1e-25);
        assert!(momentum_renormalized(&f).unwrap().abs() < 1e-14);
        assert!(momentum_untwisted(&f).unwrap().abs() < 1e-14);
        assert!((lyapunov(&f, &m, 1.5).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(distance_dx(&f, &f).unwrap(), 0.0);
        assert_eq!(distance_d0(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn kink_energy_closed_forms() {
        let f = kink_field(&gp1(0.0));
        let (e, err) = energy_with_error(&f, &gp1(0.0));
        assert!((e - 4.0 * 2f64.sqrt() / 3.0).abs() < 1e-6, "{e}");
        assert!(err < 1e-6);
        for case in BuiltinCase::ALL {
            for kappa in [0.0, 1.0, 3.0] {
                let m = builtin_model(case, 1.0, kappa).unwrap();
                // stiff SF3 cores need the finer grid
                let f = kink_profile(&m, default_grid(&m, 0.0).unwrap().0, 16384)
                    .unwrap()
                    .field();
                let want = 4.0 * integrate_default(|r| (m.big_f(r * r) * m.nu(r * r)).sqrt(), 0.0, m.r0()).unwrap();
                let e = energy(&f, &m);
                assert!((e - want).abs() < 1e-6, "{case:?} kappa={kappa}: {e} vs {want}");
            }
        }
    }

    #[test]
    fn kink_momenta_and_lyapunov() {
        let m = gp1(0.0);
        let f = kink_field(&m);
        assert!((momentum_untwisted(&f).unwrap() - PI).abs() < 1e-12);
        let e = energy(&f, &m);
        assert!((lyapunov(&f, &m, 0.7).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn gray_momenta() {
        let m = gp1(0.0);
        let c = 0.5;
        let (x, n) = default_grid(&m, c).unwrap();
        let p = gray_profile(&m, c, x, n).unwrap();
        let f = p.field();
        let branch = TravelingWave::new(&m, c).unwrap().momentum().unwrap();
        let pr = momentum_renormalized(&f).unwrap();
        assert!((pr + branch).abs() < 1e-6, "{pr} vs {branch}");
        let pu = momentum_untwisted(&f).unwrap();
        let diff = (pu - pr).rem_euclid(2.0 * PI);
        assert!(diff.min(2.0 * PI - diff) < 1e-6);
    }

    #[test]
    fn triangle_wave_distances() {
        let (v, one) = triangle_wave_field(10, 64).unwrap();
        let dxv = distance_dx(&v, &one).unwrap();
        let dinf = distance_dinf(&v, &one).unwrap();
        assert!((dxv * dxv - 0.2).abs() < 1e-3, "{}", dxv * dxv);
        let want = (0.2 + 2.0 - 2.0 * 1f64.cos()).sqrt();
        assert!((dinf - want).abs() < 1e-3, "{dinf} vs {want}");
    }

    #[test]
    fn d0_of_shifted_kink_is_order_dx() {
        let m = gp1(0.0);
        let (x, n) = default_grid(&m, 0.0).unwrap();
        let p = kink_profile(&m, x, n).unwrap();
        let a = p.field();
        let dx = a.grid.dx;
        let b = crate::profile::sample_field(&p, 0.0, dx).unwrap();
        let d = distance_d0(&a, &b).unwrap();
        assert!(d > 0.1 * dx && d < 10.0 * dx, "{d} vs dx {dx}");
    }

    #[test]
    fn pathology_examples() {
        assert!(pathology_probe(&gp1(0.0), PathologyKind::NegativeF, 1.0, 4).is_err());
        let m = gp1(-2.0);
        let lvl = probe_level(&m, PathologyKind::NegativeEllipticity).unwrap();
        assert!((lvl.r - 0.75).abs() < 1e-3 && (lvl.delta - 0.2).abs() < 1e-3, "{lvl:?}");
        let mut last = f64::INFINITY;
        for n in [4, 8, 16, 32, 64] {
            let v = pathology_probe(&m, PathologyKind::NegativeEllipticity, 0.8, n).unwrap();
            let p = momentum_renormalized(&v).unwrap();
            assert!((p - 0.8).abs() < 1e-6, "n={n}: P = {p}");
            let e = energy(&v, &m);
            assert!(e < last, "n={n}: {e} !< {last}");
            last = e;
        }
        assert!(last < -1e3, "{last}");
        // negative F through a custom nonlinearity: F < 0 above s = 1
        let m = NonlinearModel::from_expressions("(1 - s) * (s - 2)", "s", 1.0, 0.0).unwrap();
        let mut last = f64::INFINITY;
        for n in [4, 8, 16] {
            let v = pathology_probe(&m, PathologyKind::NegativeF, -0.3, n).unwrap();
            assert!((momentum_renormalized(&v).unwrap() + 0.3).abs() < 1e-6);
            let e = energy(&v, &m);
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn constrained_profile_pieces() {
        let m = gp1(0.0);
        let mu = 0.1;
        let cp = constrained_profile(&m, mu, 0.0, 20.0, 2048).unwrap();
        let gray = gray_profile(&m, cp.c, 20.0, 2048).unwrap();
        for (a, b) in cp.field.values.iter().zip(&gray.values) {
            assert!((a - b).norm() < 1e-12);
        }
        let cp = constrained_profile(&m, mu, 2.0, 20.0, 4001).unwrap();
        for j in 0..cp.field.len() {
            let x = cp.field.grid.x(j);
            if x.abs() < 2.0 {
                assert!((cp.field.values[j].norm() - mu).abs() < 1e-14);
            }
        }
        assert!(constrained_profile(&m, 0.5, 0.0, 20.0, 2048).is_err());
    }

    #[test]
    fn plateau_lyapunov_matches_explicit_form() {
        // E and the untwisted momentum change linearly in R on the plateau
        let m = gp1(0.0);
        let mu = 0.05;
        let c = constrained_speed(&m, mu).unwrap();
        let gray = gray_profile(&m, c, 25.0, 1024).unwrap();
        let grid = Grid::symmetric(25.0, 50001).unwrap();
        let f0 = constrained_from_gray(&gray, 0.0, grid).unwrap();
        let f1 = constrained_from_gray(&gray, 0.01, grid).unwrap();
        let slope = f1.phase_slope;
        let de = energy(&f1.field, &m) - energy(&f0.field, &m);
        let want = 0.02 * (mu * mu * slope * slope + m.big_f(mu * mu));
        assert!((de - want).abs() < 1e-7, "{de} vs {want}");
        let dp = momentum_untwisted(&f1.field).unwrap() - momentum_untwisted(&f0.field).unwrap();
        let want = 0.02 * slope * (1.0 - mu * mu);
        assert!((dp - want).abs() < 1e-7, "{dp} vs {want}");
    }

    fn random_smooth_field(rng: &mut ChaCha8Rng, grid: Grid, base: &FieldState, amp: f64) -> FieldState {
        let k = rng.gen_range(1..4);
        let mut values = base.values.clone();
        for _ in 0..k {
            let x0: f64 = rng.gen_range(-4.0..4.0);
            let w: f64 = rng.gen_range(0.5..2.0);
            let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp;
            for (j, v) in values.iter_mut().enumerate() {
                let y = (grid.x(j) - x0) / w;
                *v += a * (-y * y).exp();
            }
        }
        base.with_values(values)
    }

    #[test]
    fn distance_inequalities() {
        let m = gp1(0.0);
        let kink = kink_field(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst_ratio: f64 = 0.0;
        for _ in 0..100 {
            let a = random_smooth_field(&mut rng, kink.grid, &kink, 0.3);
            let b = random_smooth_field(&mut rng, kink.grid, &kink, 0.3);
            let dx = distance_dx(&a, &b).unwrap();
            assert!(dx <= distance_dinf(&a, &b).unwrap() + 1e-15);
            let c = random_smooth_field(&mut rng, kink.grid, &kink, 0.2);
            let dxk = distance_dx(&c, &kink).unwrap();
            if dxk <= 1.0 && dxk > 0.0 {
                worst_ratio = worst_ratio.max(distance_d0(&c, &kink).unwrap() / dxk);
            }
        }
        assert!(worst_ratio > 0.0 && worst_ratio < 10.0, "{worst_ratio}");
    }

    #[test]
    fn pointwise_energy_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in BuiltinCase::ALL {
            for kappa in [-0.3, 0.0, 2.0] {
                let m = builtin_model(case, 1.0, kappa).unwrap();
                let k = pointwise_energy_constant(&m).unwrap();
                let cap = m.r0_sq() + m.check_hypotheses(512).unwrap().xi_tilde;
                let kink = kink_field(&m);
                for _ in 0..5 {
                    let f = random_smooth_field(&mut rng, kink.grid, &kink, 0.2);
                    if f.values.iter().any(|v| v.norm_sqr() > cap) {
                        continue;
                    }
                    let e = energy_density_chain(&f, &m);
                    let du = d1(&f.values, f.grid.dx, f.boundary);
                    for j in 0..f.len() {
                        let eta = f.values[j].norm_sqr() - 1.0;
                        let rhs = (du[j].norm_sqr() + eta * eta) / k;
                        assert!(e[j] >= rhs - 1e-12, "{case:?} kappa={kappa} j={j}: {} < {rhs}", e[j]);
                    }
                }
            }
        }
    }

    #[test]
    fn momentum_bound_and_kink_minimality() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for case in BuiltinCase::ALL {
            let m = builtin_model(case, 1.0, 0.5).unwrap();
            let kink = kink_field(&m);
            let e_kink = energy(&kink, &m);
            let grid = kink.grid;
            let cap = m.r0_sq() + m.check_hypotheses(512).unwrap().xi_tilde;
            for _ in 0..50 {
                // nonvanishing field: momentum bound
                let gray_like = FieldState::constant(grid, 1.0, 0.0).unwrap();
                let f = random_smooth_field(&mut rng, grid, &gray_like, 0.3);
                let mu = f.min_modulus();
                if mu > 0.05 {
                    let p = momentum_renormalized(&f).unwrap();
                    let du = d1(&f.values, grid.dx, f.boundary);
                    let bound: f64 = (0..f.len())
                        .map(|j| {
                            let eta = f.values[j].norm_sqr() - 1.0;
                            du[j].norm_sqr() + eta * eta
                        })
                        .sum::<f64>()
                        * grid.dx
                        / (2.0 * mu);
                    assert!(p.abs() <= bound, "{p} > {bound}");
                }
                // vanishing field: kink is the least-energy one
                let x1 = grid.x(grid.origin_index() + rng.gen_range(0..200) - 100);
                let a: f64 = rng.gen_range(0.3..1.5);
                let phase_amp: f64 = rng.gen_range(-1.0..1.0);
                let bump: f64 = rng.gen_range(-0.2..0.2);
                let values: Vec<Complex64> = (0..grid.n)
                    .map(|j| {
                        let x = grid.x(j);
                        let y = x - x1;
                        let rho = ((a * y).tanh().abs() * (1.0 + bump * (-y * y).exp())).min(cap.sqrt());
                        let sgn = if y < 0.0 { -1.0 } else { 1.0 };
                        Complex64::from_polar(rho, phase_amp * (-(x * x) / 4.0).exp()) * sgn
                    })
                    .collect();
                let f = kink.with_values(values);
                assert!(energy(&f, &m) >= e_kink - 1e-6);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn bumped(base: &FieldState, a: f64, b: f64, x0: f64, w: f64) -> FieldState {
            let g = base.grid;
            base.with_values(
                (0..g.n)
                    .map(|j| {
                        let y = (g.x(j) - x0) / w;
                        base.values[j] + Complex64::new(a, b) * (-y * y).exp()
                    })
                    .collect(),
            )
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn lyapunov_dominates_energy(a in -0.3f64..0.3, b in -0.3f64..0.3, x0 in -5.0f64..5.0,
                                          w in 0.3f64..3.0, m in 0.01f64..10.0, kappa in 0.0f64..3.0) {
                let model = gp1(kappa);
                let g = Grid::symmetric(20.0, 1024).unwrap();
                let base = kink_profile(&model, 20.0, 1024).unwrap().field();
                prop_assert_eq!(base.grid, g);
                let f = bumped(&base, a, b, x0, w);
                let l = lyapunov(&f, &model, m).unwrap();
                prop_assert!(l >= energy(&f, &model));
            }

            #[test]
            fn dx_below_dinf(a in -0.5f64..0.5, b in -0.5f64..0.5, x0 in -5.0f64..5.0, w in 0.3f64..3.0,
                             c in -0.5f64..0.5, x1 in -5.0f64..5.0) {
                let model = gp1(0.0);
                let base = kink_profile(&model, 20.0, 1024).unwrap().field();
                let f = bumped(&base, a, b, x0, w);
                let g = bumped(&base, c, 0.0, x1, 1.0);
                prop_assert!(distance_dx(&f, &g).unwrap() <= distance_dinf(&f, &g).unwrap() + 1e-15);
            }
        }
    }
}
