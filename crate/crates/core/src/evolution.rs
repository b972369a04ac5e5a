//! Time integration of the quasilinear equation on a finite grid,
//! conservation and ellipticity monitoring, modulation fitting and the
//! orbital-stability experiment.
//!
//! The semi-discrete system is `u_t = i (L u + f(|u|^2) u + kappa h'(|u|^2) u L h(|u|^2))`
//! with `L = -D^T D`. It is Hamiltonian for the discrete energy of
//! [`crate::functionals::energy`], so the average-vector-field step (the
//! default) conserves that energy up to the nonlinear solver tolerance.
//!
//! Boundary nodes are not clamped: the difference stencil extends the field
//! by its edge values, which keeps a constant background exactly stationary
//! and the system Hamiltonian.

use crate::criterion::{vk_slope_integral, Verdict};
use crate::error::{invalid, Error, Result};
use crate::field::{BoundaryKind, FieldState};
use crate::functionals::{d0_weight, distance_dx, energy, energy_density, momentum_untwisted};
use crate::model::NonlinearModel;
use crate::numerics::fd::{d1, laplacian, map_index, D1};
use crate::numerics::{gauss_legendre, BandLu, BandMatrix, DenseLu};
use crate::profile::{default_grid, kink_profile, sample_on_grid, SolitonProfile};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const DEFAULT_ELLIPTICITY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Implicit average-vector-field step solved by simplified Newton.
    CrankNicolsonFixedPoint,
    /// Exact semilinear phase rotation around a linearly implicit
    /// dispersive stage that carries the quasilinear term.
    StrangSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Sup-norm bound on the last Newton update.
    pub fixed_point_tol: f64,
    pub max_inner_iters: usize,
    pub ellipticity_floor: f64,
    pub boundary: BoundaryKind,
    /// Trace cadence in time units.
    pub output_every: f64,
    /// Gauss-Legendre points for the average-vector-field integral.
    pub avf_points: usize,
    /// Threshold on the energy change near the boundary before a warning.
    pub boundary_watch_tol: f64,
    pub capture_radius: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            scheme: Scheme::CrankNicolsonFixedPoint,
            fixed_point_tol: 1e-12,
            max_inner_iters: 25,
            ellipticity_floor: DEFAULT_ELLIPTICITY_FLOOR,
            boundary: BoundaryKind::Background,
            output_every: 0.1,
            avf_points: 4,
            boundary_watch_tol: 1e-8,
            capture_radius: 2.0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.dt) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(invalid(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if !pos(self.fixed_point_tol) {
            return Err(invalid("fixed_point_tol must be positive"));
        }
        if !pos(self.ellipticity_floor) {
            return Err(invalid("ellipticity_floor must be positive"));
        }
        if !pos(self.output_every) {
            return Err(invalid("output_every must be positive"));
        }
        if self.max_inner_iters == 0 || self.avf_points == 0 {
            return Err(invalid("max_inner_iters and avf_points must be at least 1"));
        }
        if !pos(self.capture_radius) {
            return Err(invalid("capture_radius must be positive"));
        }
        Ok(())
    }
}

/// Output-time series of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    /// `(E(t) - E(0)) / |E(0)|` (absolute when `E(0) = 0`).
    pub energy_drift: Vec<f64>,
    /// NaN where the untwisted momentum is undefined.
    pub momentum_untwisted: Vec<f64>,
    pub momentum_drift: Vec<f64>,
    pub min_nu: Vec<f64>,
    /// Modulation parameters and distances; NaN without a reference profile.
    pub z: Vec<f64>,
    pub phi: Vec<f64>,
    pub dx_modulated: Vec<f64>,
    pub d0_modulated: Vec<f64>,
    pub warnings: Vec<String>,
    pub steps: usize,
    pub max_inner_iterations: usize,
}

impl EvolutionTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Finite-difference rates `(z', phi')` between consecutive outputs.
    pub fn modulation_rates(&self) -> Vec<(f64, f64, f64)> {
        (1..self.len())
            .map(|k| {
                let dt = self.times[k] - self.times[k - 1];
                (
                    0.5 * (self.times[k] + self.times[k - 1]),
                    (self.z[k] - self.z[k - 1]) / dt,
                    (self.phi[k] - self.phi[k - 1]) / dt,
                )
            })
            .collect()
    }

    pub fn max_abs_energy_drift(&self) -> f64 {
        self.energy_drift.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }

    pub fn max_abs_momentum_drift(&self) -> f64 {
        self.momentum_drift.iter().fold(0.0, |a, &b| a.max(b.abs()))
    }
}

fn nonlinear_terms(model: &NonlinearModel, w: &[Complex64], dx: f64, bc: BoundaryKind, with_f: bool) -> Vec<Complex64> {
    let kappa = model.kappa();
    let lg = if kappa != 0.0 {
        let g: Vec<f64> = w.iter().map(|v| model.h(v.norm_sqr())).collect();
        laplacian(&g, dx, bc)
    } else {
        Vec::new()
    };
    w.iter()
        .enumerate()
        .map(|(j, &v)| {
            let s = v.norm_sqr();
            let mut c = if with_f { model.f(s) } else { 0.0 };
            if kappa != 0.0 {
                c += kappa * model.h_prime(s) * lg[j];
            }
            v * c
        })
        .collect()
}

/// Minimum of `nu(|u|^2)` and where it is attained.
pub fn min_ellipticity(field: &FieldState, model: &NonlinearModel) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for (j, v) in field.values.iter().enumerate() {
        let nu = model.nu(v.norm_sqr());
        if nu < best.0 || nu.is_nan() {
            best = (nu, field.grid.x(j));
        }
    }
    best
}

fn check_ellipticity(field: &FieldState, model: &NonlinearModel, floor: f64) -> Result<f64> {
    let (nu, x) = min_ellipticity(field, model);
    if !(nu > floor) {
        return Err(Error::DegenerateDispersion { x, nu, floor });
    }
    Ok(nu)
}

/// Right-hand side `i (L u + f u + kappa h' u L h)` with the default
/// ellipticity floor.
pub fn rhs(field: &FieldState, model: &NonlinearModel) -> Result<Vec<Complex64>> {
    rhs_with_floor(field, model, DEFAULT_ELLIPTICITY_FLOOR)
}

pub fn rhs_with_floor(field: &FieldState, model: &NonlinearModel, floor: f64) -> Result<Vec<Complex64>> {
    check_ellipticity(field, model, floor)?;
    let (dx, bc) = (field.grid.dx, field.boundary);
    let lu = laplacian(&field.values, dx, bc);
    let nl = nonlinear_terms(model, &field.values, dx, bc, true);
    let i = Complex64::i();
    Ok(lu.iter().zip(&nl).map(|(a, b)| i * (a + b)).collect())
}

/// Rows of `L = -D^T D` as sparse `(column, value)` lists.
fn laplacian_rows(n: usize, dx: f64, bc: BoundaryKind) -> Vec<Vec<(usize, f64)>> {
    let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let s = 1.0 / dx;
    for k in 0..n {
        let mut drow: BTreeMap<usize, f64> = BTreeMap::new();
        for (m, c) in D1.iter().enumerate() {
            if *c != 0.0 {
                *drow.entry(map_index(k as isize + m as isize - 2, n, bc)).or_insert(0.0) += c * s;
            }
        }
        for (&j, &a) in &drow {
            for (&l, &b) in &drow {
                *rows[j].entry(l).or_insert(0.0) -= a * b;
            }
        }
    }
    rows.into_iter().map(|r| r.into_iter().collect()).collect()
}

/// Banded matrix plus a low-rank periodic corner correction (Woodbury).
struct LinearSystem {
    lu: BandLu,
    corner: Option<Corner>,
}

struct Corner {
    rows: Vec<usize>,
    entries: Vec<Vec<(usize, f64)>>,
    z: Vec<Vec<f64>>,
    s: DenseLu,
}

const KL: usize = 9;

impl LinearSystem {
    fn build(m: usize, entries: BTreeMap<(usize, usize), f64>) -> Result<Self> {
        let mut band = BandMatrix::zeros(m, KL, KL);
        let mut corner: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for ((r, c), v) in entries {
            if r.abs_diff(c) <= KL {
                band.add(r, c, v);
            } else {
                corner.entry(r).or_default().push((c, v));
            }
        }
        let lu = band.factor()?;
        if corner.is_empty() {
            return Ok(Self { lu, corner: None });
        }
        let rows: Vec<usize> = corner.keys().copied().collect();
        let entries: Vec<Vec<(usize, f64)>> = corner.into_values().collect();
        let p = rows.len();
        let z: Vec<Vec<f64>> = rows
            .iter()
            .map(|&r| {
                let mut e = vec![0.0; m];
                e[r] = 1.0;
                lu.solve_in_place(&mut e);
                e
            })
            .collect();
        let mut s = vec![0.0; p * p];
        for a in 0..p {
            for b in 0..p {
                let dot: f64 = entries[a].iter().map(|&(c, v)| v * z[b][c]).sum();
                s[a * p + b] = dot + if a == b { 1.0 } else { 0.0 };
            }
        }
        Ok(Self {
            lu,
            corner: Some(Corner {
                rows,
                entries,
                z,
                s: DenseLu::factor(p, s)?,
            }),
        })
    }

    fn solve(&self, b: &mut [f64]) {
        self.lu.solve_in_place(b);
        if let Some(c) = &self.corner {
            let mut t: Vec<f64> = c
                .entries
                .iter()
                .map(|row| row.iter().map(|&(j, v)| v * b[j]).sum())
                .collect();
            c.s.solve_in_place(&mut t);
            for (zk, tk) in c.z.iter().zip(&t) {
                for (bi, zi) in b.iter_mut().zip(zk) {
                    *bi -= zi * tk;
                }
            }
            let _ = &c.rows;
        }
    }
}

/// Stepper holding grid-dependent data.
struct Stepper<'a> {
    model: &'a NonlinearModel,
    n: usize,
    dx: f64,
    bc: BoundaryKind,
    lap: Vec<Vec<(usize, f64)>>,
    tau: Vec<(f64, f64)>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a NonlinearModel, n: usize, dx: f64, bc: BoundaryKind, avf_points: usize) -> Self {
        let (x, w) = gauss_legendre(avf_points);
        let tau = x.iter().zip(&w).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
        Self {
            model,
            n,
            dx,
            bc,
            lap: laplacian_rows(n, dx, bc),
            tau,
        }
    }

    /// Assembles `I - a i (L + N'(w))` in interleaved real form, where `N'`
    /// is the derivative of the nonlinear terms (the `f` part optional).
    fn assemble(&self, w: &[Complex64], a: f64, with_f: bool) -> Result<LinearSystem> {
        let m = self.model;
        let kappa = m.kappa();
        let n = self.n;
        let mut e: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut add = |r: usize, c: usize, v: f64| {
            if v != 0.0 {
                *e.entry((r, c)).or_insert(0.0) += v;
            }
        };
        let s: Vec<f64> = w.iter().map(|v| v.norm_sqr()).collect();
        let (hp, lg, hpp) = if kappa != 0.0 {
            let g: Vec<f64> = s.iter().map(|&s| m.h(s)).collect();
            (
                s.iter().map(|&s| m.h_prime(s)).collect::<Vec<_>>(),
                laplacian(&g, self.dx, self.bc),
                s.iter().map(|&s| m.h_dprime(s)).collect::<Vec<_>>(),
            )
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        // i * gamma * rho_k with rho_k = 2 Re(conj(w_k) delta_k)
        let add_rho = |add: &mut dyn FnMut(usize, usize, f64), j: usize, k: usize, g: Complex64| {
            let (wr, wi) = (w[k].re, w[k].im);
            add(2 * j, 2 * k, a * g.im * 2.0 * wr);
            add(2 * j, 2 * k + 1, a * g.im * 2.0 * wi);
            add(2 * j + 1, 2 * k, -a * g.re * 2.0 * wr);
            add(2 * j + 1, 2 * k + 1, -a * g.re * 2.0 * wi);
        };
        for j in 0..n {
            add(2 * j, 2 * j, 1.0);
            add(2 * j + 1, 2 * j + 1, 1.0);
            for &(k, l) in &self.lap[j] {
                add(2 * j, 2 * k + 1, a * l);
                add(2 * j + 1, 2 * k, -a * l);
            }
            let mut alpha = if with_f { m.f(s[j]) } else { 0.0 };
            let mut gamma = if with_f {
                w[j] * m.f_prime(s[j])
            } else {
                Complex64::new(0.0, 0.0)
            };
            if kappa != 0.0 {
                alpha += kappa * hp[j] * lg[j];
                gamma += w[j] * (kappa * hpp[j] * lg[j]);
            }
            add(2 * j, 2 * j + 1, a * alpha);
            add(2 * j + 1, 2 * j, -a * alpha);
            add_rho(&mut add, j, j, gamma);
            if kappa != 0.0 {
                for &(k, l) in &self.lap[j] {
                    add_rho(&mut add, j, k, w[j] * (kappa * hp[j] * l * hp[k]));
                }
            }
        }
        LinearSystem::build(2 * n, e)
    }

    fn solve_complex(sys: &LinearSystem, r: &[Complex64]) -> Vec<Complex64> {
        let mut b: Vec<f64> = r.iter().flat_map(|z| [z.re, z.im]).collect();
        sys.solve(&mut b);
        b.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
    }

    /// Average-vector-field step; returns the new state and the iteration count.
    fn avf(&self, u0: &[Complex64], dt: f64, cfg: &EvolutionConfig) -> Result<(Vec<Complex64>, usize)> {
        let i = Complex64::i();
        let lu0 = laplacian(u0, self.dx, self.bc);
        let mut u1 = u0.to_vec();
        let mut sys = self.assemble(u0, 0.5 * dt, true)?;
        let mut last = f64::INFINITY;
        for it in 1..=cfg.max_inner_iters {
            let lu1 = laplacian(&u1, self.dx, self.bc);
            let mut nbar = vec![Complex64::new(0.0, 0.0); self.n];
            for &(t, wgt) in &self.tau {
                let w: Vec<Complex64> = u0.iter().zip(&u1).map(|(a, b)| a + (b - a) * t).collect();
                for (acc, v) in nbar
                    .iter_mut()
                    .zip(nonlinear_terms(self.model, &w, self.dx, self.bc, true))
                {
                    *acc += v * wgt;
                }
            }
            let res: Vec<Complex64> = (0..self.n)
                .map(|j| -(u1[j] - u0[j] - i * dt * (0.5 * (lu0[j] + lu1[j]) + nbar[j])))
                .collect();
            let delta = Self::solve_complex(&sys, &res);
            let mut norm: f64 = 0.0;
            for (u, d) in u1.iter_mut().zip(&delta) {
                *u += d;
                norm = norm.max(d.norm());
            }
            if !norm.is_finite() {
                return Err(Error::NonFinite("Newton update".into()));
            }
            if norm <= cfg.fixed_point_tol {
                return Ok((u1, it));
            }
            if it % 5 == 0 || norm > 0.5 * last {
                let mid: Vec<Complex64> = u0.iter().zip(&u1).map(|(a, b)| 0.5 * (a + b)).collect();
                sys = self.assemble(&mid, 0.5 * dt, true)?;
            }
            last = norm;
        }
        Err(Error::NonConvergence {
            iterations: cfg.max_inner_iters,
            residual: last,
        })
    }

    fn rotate(&self, u: &mut [Complex64], t: f64) {
        for v in u.iter_mut() {
            *v *= Complex64::from_polar(1.0, self.model.f(v.norm_sqr()) * t);
        }
    }

    /// Strang splitting: semilinear rotation, linearly implicit dispersive
    /// stage with the quasilinear term, semilinear rotation.
    fn strang(&self, u0: &[Complex64], dt: f64) -> Result<Vec<Complex64>> {
        let i = Complex64::i();
        let mut u = u0.to_vec();
        self.rotate(&mut u, 0.5 * dt);
        let lu = laplacian(&u, self.dx, self.bc);
        let q = nonlinear_terms(self.model, &u, self.dx, self.bc, false);
        let sys = self.assemble(&u, 0.5 * dt, false)?;
        let r: Vec<Complex64> = lu.iter().zip(&q).map(|(a, b)| i * dt * (a + b)).collect();
        let delta = Self::solve_complex(&sys, &r);
        for (v, d) in u.iter_mut().zip(&delta) {
            *v += d;
        }
        self.rotate(&mut u, 0.5 * dt);
        Ok(u)
    }
}

/// One time step of length `config.dt`.
pub fn step(field: &FieldState, model: &NonlinearModel, config: &EvolutionConfig) -> Result<FieldState> {
    config.validate()?;
    let f = FieldState {
        boundary: config.boundary,
        ..field.clone()
    };
    check_ellipticity(&f, model, config.ellipticity_floor)?;
    let st = Stepper::new(model, f.len(), f.grid.dx, f.boundary, config.avf_points);
    let values = match config.scheme {
        Scheme::CrankNicolsonFixedPoint => st.avf(&f.values, config.dt, config)?.0,
        Scheme::StrangSplit => st.strang(&f.values, config.dt)?,
    };
    let out = f.with_values(values);
    check_finite(&out)?;
    check_ellipticity(&out, model, config.ellipticity_floor)?;
    Ok(out)
}

fn check_finite(f: &FieldState) -> Result<()> {
    if let Some(j) = f.values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite(format!("field at x = {}", f.grid.x(j))));
    }
    Ok(())
}

/// Result of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub final_field: FieldState,
    pub trace: EvolutionTrace,
}

const EDGE_NODES: usize = 8;

fn edge_energy(e: &[f64]) -> Vec<f64> {
    let n = e.len();
    let k = EDGE_NODES.min(n / 2);
    e[..k].iter().chain(&e[n - k..]).copied().collect()
}

/// Integrates to `config.t_final`, recording the trace every
/// `config.output_every`. With a reference kink, the modulation `(z, phi)`
/// is fitted at each output and the modulated distances recorded.
pub fn evolve(
    initial: &FieldState,
    model: &NonlinearModel,
    config: &EvolutionConfig,
    reference: Option<&SolitonProfile>,
) -> Result<Evolution> {
    config.validate()?;
    let mut field = FieldState {
        boundary: config.boundary,
        ..initial.clone()
    };
    if field.len() < 16 {
        return Err(invalid("evolution needs at least 16 grid nodes"));
    }
    check_finite(&field)?;
    check_ellipticity(&field, model, config.ellipticity_floor)?;
    let st = Stepper::new(model, field.len(), field.grid.dx, field.boundary, config.avf_points);
    let nsteps = ((config.t_final / config.dt) - 1e-9).ceil().max(0.0) as usize;
    let per_output = ((config.output_every / config.dt).round() as usize).max(1);
    let mut trace = EvolutionTrace::default();
    let e0 = energy(&field, model);
    let p0 = momentum_untwisted(&field).unwrap_or(f64::NAN);
    let edge0 = edge_energy(&energy_density(&field, model));
    let mut warned = false;
    let mut modulation: Option<(f64, f64)> = None;
    let record =
        |t: f64, f: &FieldState, trace: &mut EvolutionTrace, modulation: &mut Option<(f64, f64)>| -> Result<()> {
            let e = energy(f, model);
            let p = momentum_untwisted(f).unwrap_or(f64::NAN);
            trace.times.push(t);
            trace.energy.push(e);
            trace
                .energy_drift
                .push(if e0 != 0.0 { (e - e0) / e0.abs() } else { e - e0 });
            trace.momentum_untwisted.push(p);
            let mut dp = if p0 != 0.0 { (p - p0) / p0.abs() } else { p - p0 };
            // the untwisted momentum lives on a circle
            let period = 2.0 * PI * f.r0 * f.r0 / p0.abs().max(1e-300);
            if p0 != 0.0 && dp.abs() > 0.5 * period {
                dp -= period * (dp / period).round();
            }
            trace.momentum_drift.push(dp);
            trace.min_nu.push(min_ellipticity(f, model).0);
            match reference {
                Some(kink) => {
                    let opts = ModulationOptions {
                        initial: *modulation,
                        capture_radius: config.capture_radius,
                        ..ModulationOptions::default()
                    };
                    let m = fit_modulation_with(f, kink, &opts)?;
                    *modulation = Some((m.z, m.phi));
                    let orbit = sample_on_grid(kink, f.grid, m.phi, m.z)?;
                    trace.z.push(m.z);
                    trace.phi.push(m.phi);
                    trace.d0_modulated.push(m.d0);
                    trace.dx_modulated.push(distance_dx(f, &orbit)?);
                }
                None => {
                    trace.z.push(f64::NAN);
                    trace.phi.push(f64::NAN);
                    trace.d0_modulated.push(f64::NAN);
                    trace.dx_modulated.push(f64::NAN);
                }
            }
            Ok(())
        };
    record(0.0, &field, &mut trace, &mut modulation)?;
    let mut t = 0.0;
    for k in 1..=nsteps {
        let h = if k == nsteps {
            config.t_final - (nsteps - 1) as f64 * config.dt
        } else {
            config.dt
        };
        let values = match config.scheme {
            Scheme::CrankNicolsonFixedPoint => {
                let (v, it) = st.avf(&field.values, h, config)?;
                trace.max_inner_iterations = trace.max_inner_iterations.max(it);
                v
            }
            Scheme::StrangSplit => st.strang(&field.values, h)?,
        };
        field = field.with_values(values);
        t = if k == nsteps {
            config.t_final
        } else {
            k as f64 * config.dt
        };
        check_finite(&field)?;
        check_ellipticity(&field, model, config.ellipticity_floor)?;
        trace.steps = k;
        if k % per_output == 0 || k == nsteps {
            if !warned {
                let edge = edge_energy(&energy_density(&field, model));
                let change: f64 = edge.iter().zip(&edge0).map(|(a, b)| (a - b).abs()).sum::<f64>() * field.grid.dx;
                if change > config.boundary_watch_tol {
                    trace.warnings.push(format!(
                        "boundary-adjacent energy changed by {change:.3e} at t = {t:.4}; the background clamp may be stale"
                    ));
                    warned = true;
                }
            }
            record(t, &field, &mut trace, &mut modulation)?;
        }
    }
    let _ = t;
    Ok(Evolution {
        final_field: field,
        trace,
    })
}

/// Options of [`fit_modulation_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationOptions {
    /// Warm start; `None` runs the coarse scan.
    pub initial: Option<(f64, f64)>,
    pub capture_radius: f64,
    pub max_iter: usize,
    pub scan_half_width: f64,
    pub scan_z_nodes: usize,
    pub scan_phi_nodes: usize,
}

impl Default for ModulationOptions {
    fn default() -> Self {
        Self {
            initial: None,
            capture_radius: 2.0,
            max_iter: 50,
            scan_half_width: 5.0,
            scan_z_nodes: 21,
            scan_phi_nodes: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub z: f64,
    pub phi: f64,
    /// `d_0(field, e^{i phi} U(. - z))` at the optimum.
    pub d0: f64,
    pub iterations: usize,
}

/// Squared `d_0` to the orbit element with gradient and Hessian in `(z, phi)`.
struct Objective<'a> {
    field: &'a FieldState,
    kink: &'a SolitonProfile,
    weight: Vec<f64>,
    v_sq: Vec<f64>,
}

impl<'a> Objective<'a> {
    fn new(field: &'a FieldState, kink: &'a SolitonProfile) -> Self {
        let weight = (0..field.len()).map(|j| d0_weight(field.grid.x(j))).collect();
        let v_sq = field.values.iter().map(|v| v.norm_sqr()).collect();
        Self {
            field,
            kink,
            weight,
            v_sq,
        }
    }

    fn value(&self, z: f64, phi: f64) -> f64 {
        let g = self.field.grid;
        let rot = Complex64::from_polar(1.0, phi);
        let w: Vec<Complex64> = (0..g.n).map(|j| self.kink.eval(g.x(j) - z) * rot).collect();
        let e: Vec<Complex64> = self.field.values.iter().zip(&w).map(|(v, w)| v - w).collect();
        let r = d1(&e, g.dx, self.field.boundary);
        let mut sum = 0.0;
        for j in 0..g.n {
            let q = self.v_sq[j] - w[j].norm_sqr();
            sum += r[j].norm_sqr() + q * q + self.weight[j] * e[j].norm_sqr();
        }
        sum * g.dx
    }

    /// Value, gradient and Hessian.
    fn full(&self, z: f64, phi: f64) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        let g = self.field.grid;
        let bc = self.field.boundary;
        let rot = Complex64::from_polar(1.0, phi);
        let i = Complex64::i();
        let n = g.n;
        let mut w = Vec::with_capacity(n);
        let mut wz = Vec::with_capacity(n);
        let mut wzz = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        let mut qz = Vec::with_capacity(n);
        let mut qzz = Vec::with_capacity(n);
        for j in 0..n {
            let [u, u1, u2] = self.kink.eval3(g.x(j) - z);
            w.push(u * rot);
            wz.push(-u1 * rot);
            wzz.push(u2 * rot);
            q.push(self.v_sq[j] - u.norm_sqr());
            qz.push(2.0 * (u.conj() * u1).re);
            qzz.push(-2.0 * (u1.norm_sqr() + (u.conj() * u2).re));
        }
        let e: Vec<Complex64> = self.field.values.iter().zip(&w).map(|(v, w)| v - w).collect();
        let r = d1(&e, g.dx, bc);
        let dw = d1(&w, g.dx, bc);
        let dwz = d1(&wz, g.dx, bc);
        let dwzz = d1(&wzz, g.dx, bc);
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        let mut hess = [[0.0; 2]; 2];
        let re = |a: Complex64, b: Complex64| (a.conj() * b).re;
        for j in 0..n {
            let rho = self.weight[j];
            // derivatives of e (and r = D e): e_a = -w_a, e_ab = -w_ab
            let ez = -wz[j];
            let ep = -i * w[j];
            let ezz = -wzz[j];
            let ezp = -i * wz[j];
            let epp = w[j];
            let rz = -dwz[j];
            let rp = -i * dw[j];
            let rzz = -dwzz[j];
            let rzp = -i * dwz[j];
            let rpp = dw[j];
            val += r[j].norm_sqr() + q[j] * q[j] + rho * e[j].norm_sqr();
            grad[0] += re(r[j], rz) + q[j] * qz[j] + rho * re(e[j], ez);
            grad[1] += re(r[j], rp) + rho * re(e[j], ep);
            hess[0][0] +=
                re(rz, rz) + re(r[j], rzz) + qz[j] * qz[j] + q[j] * qzz[j] + rho * (re(ez, ez) + re(e[j], ezz));
            hess[0][1] += re(rz, rp) + re(r[j], rzp) + rho * (re(ez, ep) + re(e[j], ezp));
            hess[1][1] += re(rp, rp) + re(r[j], rpp) + rho * (re(ep, ep) + re(e[j], epp));
        }
        let dx = g.dx;
        hess[1][0] = hess[0][1];
        (
            val * dx,
            [2.0 * dx * grad[0], 2.0 * dx * grad[1]],
            [
                [2.0 * dx * hess[0][0], 2.0 * dx * hess[0][1]],
                [2.0 * dx * hess[1][0], 2.0 * dx * hess[1][1]],
            ],
        )
    }
}

/// Fits `(z, phi)` minimizing `d_0(field, e^{i phi} U(. - z))` with defaults.
pub fn fit_modulation(field: &FieldState, kink: &SolitonProfile) -> Result<Modulation> {
    fit_modulation_with(field, kink, &ModulationOptions::default())
}

/// Coarse scan (unless warm-started), then Newton with a
/// Levenberg-Marquardt safeguard.
pub fn fit_modulation_with(field: &FieldState, kink: &SolitonProfile, opts: &ModulationOptions) -> Result<Modulation> {
    let obj = Objective::new(field, kink);
    let (mut z, mut phi) = match opts.initial {
        Some(p) => p,
        None => {
            let mut best = (f64::INFINITY, 0.0, 0.0);
            let nz = opts.scan_z_nodes.max(2);
            for a in 0..nz {
                let z = -opts.scan_half_width + 2.0 * opts.scan_half_width * a as f64 / (nz - 1) as f64;
                for b in 0..opts.scan_phi_nodes.max(1) {
                    let phi = -PI + 2.0 * PI * b as f64 / opts.scan_phi_nodes.max(1) as f64;
                    let v = obj.value(z, phi);
                    if v < best.0 {
                        best = (v, z, phi);
                    }
                }
            }
            (best.1, best.2)
        }
    };
    let (mut val, mut grad, mut hess) = obj.full(z, phi);
    let mut lambda = 0.0;
    let scale = hess[0][0].abs() + hess[1][1].abs() + 1e-300;
    for it in 1..=opts.max_iter {
        if val == 0.0 || (grad[0] == 0.0 && grad[1] == 0.0) {
            return finish(z, phi, val, it - 1, opts);
        }
        let mut accepted = false;
        for _ in 0..40 {
            let a = hess[0][0] + lambda;
            let d = hess[1][1] + lambda;
            let b = hess[0][1];
            let det = a * d - b * b;
            if a > 0.0 && det > 0.0 {
                let dz = -(d * grad[0] - b * grad[1]) / det;
                let dp = -(a * grad[1] - b * grad[0]) / det;
                let (nz, np) = (z + dz, phi + dp);
                let nv = obj.value(nz, np);
                if nv <= val {
                    let small = dz.abs() <= 1e-13 * (1.0 + z.abs()) && dp.abs() <= 1e-13 * (1.0 + phi.abs());
                    z = nz;
                    phi = np;
                    let f = obj.full(z, phi);
                    val = f.0;
                    grad = f.1;
                    hess = f.2;
                    lambda *= 0.1;
                    if lambda < 1e-12 * scale {
                        lambda = 0.0;
                    }
                    accepted = true;
                    if small {
                        return finish(z, phi, val, it, opts);
                    }
                    break;
                }
            }
            lambda = if lambda == 0.0 { 1e-6 * scale } else { 10.0 * lambda };
        }
        if !accepted {
            // no descent left at the resolution of the objective
            return finish(z, phi, val, it, opts);
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: (grad[0].abs()).max(grad[1].abs()),
    })
}

fn finish(z: f64, phi: f64, val: f64, iterations: usize, opts: &ModulationOptions) -> Result<Modulation> {
    let d0 = val.max(0.0).sqrt();
    if d0 > opts.capture_radius {
        return Err(Error::CaptureRadius {
            distance: d0,
            radius: opts.capture_radius,
        });
    }
    Ok(Modulation { z, phi, d0, iterations })
}

/// Initial datum `U + A (1 + i/2) exp(-(x - 1)^2)` of the experiment.
pub fn perturbed_kink(kink: &SolitonProfile, amplitude: f64) -> Result<FieldState> {
    let base = kink.field();
    let g = base.grid;
    let bump = Complex64::new(1.0, 0.5) * amplitude;
    let values = (0..g.n)
        .map(|j| {
            let y = g.x(j) - 1.0;
            base.values[j] + bump * (-y * y).exp()
        })
        .collect();
    Ok(base.with_values(values))
}

#[derive(Debug, Clone)]
pub struct OrbitalExperiment {
    pub trace: EvolutionTrace,
    pub p_prime_0: f64,
    pub verdict: Verdict,
    /// `d_X(Psi_0, U)`.
    pub initial_distance: f64,
    pub initial_modulated: f64,
    pub max_modulated: f64,
    /// `sup_t d_X(modulated) / d_X(Psi_0, U)^{1/8}`.
    pub bound_constant: f64,
    /// `sup_t d_X(modulated) <= 10 x` its initial value.
    pub bounded: bool,
    /// Growth by at least 5x, recorded as a diagnostic.
    pub growth_flag: bool,
}

/// Evolves a perturbed kink on the default grid and tracks the modulated
/// distance to the kink orbit.
pub fn orbital_stability_experiment(
    model: &NonlinearModel,
    perturbation_amplitude: f64,
    t_final: f64,
    config: &EvolutionConfig,
) -> Result<OrbitalExperiment> {
    if !perturbation_amplitude.is_finite() || perturbation_amplitude < 0.0 {
        return Err(invalid("perturbation amplitude must be finite and >= 0"));
    }
    let crit = vk_slope_integral(model)?;
    let (x, n) = default_grid(model, 0.0)?;
    let kink = kink_profile(model, x, n)?;
    let psi0 = perturbed_kink(&kink, perturbation_amplitude)?;
    let cfg = EvolutionConfig {
        t_final,
        ..config.clone()
    };
    let run = evolve(&psi0, model, &cfg, Some(&kink))?;
    let initial_distance = distance_dx(&psi0, &kink.field())?;
    let tr = run.trace;
    let initial_modulated = tr.dx_modulated[0];
    let max_modulated = tr.dx_modulated.iter().fold(0.0f64, |a, &b| a.max(b));
    let bound_constant = if initial_distance > 0.0 {
        max_modulated / initial_distance.powf(0.125)
    } else {
        0.0
    };
    Ok(OrbitalExperiment {
        p_prime_0: crit.p_prime_0,
        verdict: crit.verdict,
        initial_distance,
        initial_modulated,
        max_modulated,
        bound_constant,
        bounded: max_modulated <= 10.0 * initial_modulated.max(1e-14),
        growth_flag: max_modulated >= 5.0 * initial_modulated,
        trace: tr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use crate::functionals::energy;
    use crate::model::{builtin_model, BuiltinCase};
    use crate::profile::{gray_profile, sample_field};

    fn gp1(kappa: f64) -> NonlinearModel {
        builtin_model(BuiltinCase::Gp1, 1.0, kappa).unwrap()
    }

    #[test]
    fn laplacian_rows_match_operator() {
        for bc in [BoundaryKind::Background, BoundaryKind::Periodic] {
            let n = 40;
            let rows = laplacian_rows(n, 0.3, bc);
            let u: Vec<f64> = (0..n).map(|j| (j as f64 * 0.7).sin() + 0.1 * j as f64).collect();
            let want = laplacian(&u, 0.3, bc);
            for j in 0..n {
                let got: f64 = rows[j].iter().map(|&(k, l)| l * u[k]).sum();
                assert!((got - want[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rhs_examples() {
        let m = gp1(0.0);
        let g = Grid::symmetric(20.0, 512).unwrap();
        let bg = FieldState::constant(g, 1.0, 0.3).unwrap();
        assert!(rhs(&bg, &m).unwrap().iter().all(|v| v.norm() < 1e-14));
        let kink = kink_profile(&m, 20.0, 4096).unwrap().field();
        assert!(rhs(&kink, &m).unwrap().iter().all(|v| v.norm() < 1e-6));
        let c = 0.5;
        for kappa in [0.0, 1.0] {
            let m = gp1(kappa);
            let (x, n) = default_grid(&m, c).unwrap();
            let p = gray_profile(&m, c, x, n).unwrap();
            let f = p.field();
            let r = rhs(&f, &m).unwrap();
            let du = d1(&f.values, f.grid.dx, f.boundary);
            let err = r.iter().zip(&du).map(|(a, b)| (a + b * c).norm()).fold(0.0, f64::max);
            assert!(err < 1e-3, "kappa={kappa}: {err}");
        }
        let bad = gp1(-0.45);
        let f = FieldState::constant(g, 1.0, 0.0)
            .unwrap()
            .with_values(vec![Complex64::new(1.2, 0.0); 512]);
        assert!(matches!(rhs(&f, &bad), Err(Error::DegenerateDispersion { .. })));
    }

    #[test]
    fn background_step_is_stationary() {
        let m = gp1(0.8);
        let g = Grid::symmetric(20.0, 256).unwrap();
        let bg = FieldState::constant(g, 1.0, 0.3).unwrap();
        for scheme in [Scheme::CrankNicolsonFixedPoint, Scheme::StrangSplit] {
            let cfg = EvolutionConfig {
                scheme,
                ..EvolutionConfig::default()
            };
            let next = step(&bg, &m, &cfg).unwrap();
            for (a, b) in next.values.iter().zip(&bg.values) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn per_step_energy_conservation() {
        for (case, kappa) in [
            (BuiltinCase::Gp1, 0.0),
            (BuiltinCase::Gp1, 1.0),
            (BuiltinCase::Gp2, 0.5),
            (BuiltinCase::Sf3, 2.0),
        ] {
            let m = builtin_model(case, 1.0, kappa).unwrap();
            let (x, n) = default_grid(&m, 0.0).unwrap();
            let kink = kink_profile(&m, x, n.min(2048)).unwrap();
            let f = perturbed_kink(&kink, 0.05).unwrap();
            let cfg = EvolutionConfig {
                dt: 1e-3,
                ..EvolutionConfig::default()
            };
            let next = step(&f, &m, &cfg).unwrap();
            let (e0, e1) = (energy(&f, &m), energy(&next, &m));
            assert!((e1 - e0).abs() <= 1e-8, "{case:?} kappa={kappa}: {}", e1 - e0);
        }
    }

    #[test]
    fn periodic_plane_wave() {
        // e^{i(kx + (f(1) - k^2_d) t)} on a periodic grid: modulus preserved
        let m = gp1(0.5);
        let n = 128;
        let len = 2.0 * PI;
        let g = Grid {
            x0: 0.0,
            dx: len / n as f64,
            n,
        };
        let f = FieldState::from_fn(g, 1.0, BoundaryKind::Periodic, |x| {
            Complex64::from_polar(1.0 + 0.05 * x.cos(), x)
        })
        .unwrap();
        let cfg = EvolutionConfig {
            dt: 1e-3,
            t_final: 0.2,
            boundary: BoundaryKind::Periodic,
            ..EvolutionConfig::default()
        };
        let run = evolve(&f, &m, &cfg, None).unwrap();
        assert!(
            run.trace.max_abs_energy_drift() < 1e-10,
            "{}",
            run.trace.max_abs_energy_drift()
        );
        // the corner correction makes the Newton matrix exact
        assert!(
            run.trace.max_inner_iterations <= 5,
            "{}",
            run.trace.max_inner_iterations
        );
    }

    #[test]
    fn gray_soliton_short_run() {
        let m = gp1(0.0);
        let c = 0.5;
        let (x, n) = default_grid(&m, c).unwrap();
        let p = gray_profile(&m, c, x, 2048.min(n)).unwrap();
        let f = p.field();
        let t = 1.0;
        let cfg = EvolutionConfig {
            dt: 2e-3,
            t_final: t,
            ..EvolutionConfig::default()
        };
        let run = evolve(&f, &m, &cfg, None).unwrap();
        let want = sample_field(&p, 0.0, c * t).unwrap();
        let d = distance_dx(&run.final_field, &want).unwrap();
        assert!(d < 1e-3, "{d}");
        assert!(run.trace.max_abs_energy_drift() < 1e-9);
        // Strang stays close as well
        let cfg = EvolutionConfig {
            scheme: Scheme::StrangSplit,
            ..cfg
        };
        let run = evolve(&f, &m, &cfg, None).unwrap();
        assert!(distance_dx(&run.final_field, &want).unwrap() < 1e-2);
    }

    #[test]
    fn second_order_in_time() {
        let m = gp1(1.0);
        let (x, _) = default_grid(&m, 0.0).unwrap();
        let kink = kink_profile(&m, x, 1024).unwrap();
        let f = perturbed_kink(&kink, 0.1).unwrap();
        let run = |dt: f64| {
            let cfg = EvolutionConfig {
                dt,
                t_final: 0.4,
                ..EvolutionConfig::default()
            };
            evolve(&f, &m, &cfg, None).unwrap().final_field
        };
        let fine = run(1.25e-3);
        let e1 = distance_dx(&run(0.02), &fine).unwrap();
        let e2 = distance_dx(&run(0.01), &fine).unwrap();
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn ellipticity_breach_is_caught() {
        let m = gp1(-0.45);
        let g = Grid::symmetric(20.0, 512).unwrap();
        let f = FieldState::from_fn(g, 1.0, BoundaryKind::Background, |x| {
            Complex64::new(1.0 + 0.06 * (-x * x).exp(), 0.0)
        })
        .unwrap();
        let cfg = EvolutionConfig {
            dt: 1e-3,
            t_final: 5.0,
            ..EvolutionConfig::default()
        };
        match evolve(&f, &m, &cfg, None) {
            Err(Error::DegenerateDispersion { nu, .. }) => assert!(nu.is_finite()),
            other => panic!("expected a degenerate-dispersion error, got {other:?}"),
        }
    }

    #[test]
    fn modulation_examples() {
        let m = gp1(0.0);
        let (x, n) = default_grid(&m, 0.0).unwrap();
        let kink = kink_profile(&m, x, n).unwrap();
        let exact = sample_field(&kink, 0.7, 1.3).unwrap();
        let fit = fit_modulation(&exact, &kink).unwrap();
        assert!((fit.z - 1.3).abs() < 1e-8 && (fit.phi - 0.7).abs() < 1e-8, "{fit:?}");
        assert!(fit.d0 < 1e-8);
        let fit = fit_modulation(&kink.field(), &kink).unwrap();
        assert!(fit.z.abs() < 1e-8 && fit.phi.abs() < 1e-8 && fit.d0 < 1e-8);
        // small bump: continuity, and agreement with a brute-force search
        let g = exact.grid;
        let bumped = exact.with_values(
            (0..g.n)
                .map(|j| {
                    let y = g.x(j) - 0.5;
                    exact.values[j] + Complex64::new(1e-3, -5e-4) * (-y * y).exp()
                })
                .collect(),
        );
        let fit = fit_modulation(&bumped, &kink).unwrap();
        assert!((fit.z - 1.3).abs() < 1e-2 && (fit.phi - 0.7).abs() < 1e-2);
        let obj = Objective::new(&bumped, &kink);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in -10..=10 {
            for b in -10..=10 {
                let (z, p) = (fit.z + 1e-3 * a as f64, fit.phi + 1e-3 * b as f64);
                let v = obj.value(z, p);
                if v < best.0 {
                    best = (v, z, p);
                }
            }
        }
        assert!((best.1 - fit.z).abs() < 1e-3 && (best.2 - fit.phi).abs() < 1e-3);
        // outside a tight capture radius
        let opts = ModulationOptions {
            capture_radius: 1e-6,
            ..ModulationOptions::default()
        };
        assert!(matches!(
            fit_modulation_with(&bumped, &kink, &opts),
            Err(Error::CaptureRadius { .. })
        ));
    }

    #[test]
    fn unperturbed_experiment_is_flat() {
        let m = gp1(0.0);
        let cfg = EvolutionConfig {
            dt: 5e-3,
            output_every: 0.25,
            ..EvolutionConfig::default()
        };
        let ex = orbital_stability_experiment(&m, 0.0, 1.0, &cfg).unwrap();
        assert_eq!(ex.verdict, Verdict::StableSlope);
        assert!(ex.max_modulated < 1e-7, "{}", ex.max_modulated);
        let times = &ex.trace.times;
        assert!(times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(ex.trace.z.len(), times.len());
    }
}
