//! Black (kink) and gray soliton profiles by quadrature of the first integral.
//!
//! Both families are parametrized by `p >= 0` through
//! `eta = xi_c sech^2 p`, so that `eta - xi_c = |xi_c| tanh^2 p`. This removes
//! the inverse square-root singularity at the turning point `eta = xi_c` and
//! makes `dx/dp` bounded, tending to `2 / lambda` in the tail. The map
//! `p -> x` is tabulated with adaptive Gauss–Kronrod, inverted with monotone
//! cubic interpolation and polished by Newton, and the field is stored on a
//! fine uniform table with values and first two derivatives (quintic Hermite
//! evaluation).

use crate::error::{invalid, Error, Result};
use crate::field::{BoundaryKind, FieldState, Grid};
use crate::model::{speed_of_sound, NonlinearModel};
use crate::numerics::{integrate, Pchip, QuadOptions};
use crate::potential::{branch_root, BranchRoot, PotentialSlice};
use num_complex::Complex64;
use std::sync::Arc;

const TAYLOR_SWITCH: f64 = 1e-4;
const P_STEP: f64 = 0.05;
const P_CAP: f64 = 300.0;

fn quad_opts() -> QuadOptions {
    QuadOptions::tol(1e-15, 1e-13)
}

/// Expected exponential decay rate `sqrt((c_s^2 - c^2) / nu(r0^2))` of `eta`.
pub fn expected_decay_rate(model: &NonlinearModel, c: f64) -> Result<f64> {
    let c_s = speed_of_sound(model)?;
    let nu = model.nu(model.r0_sq());
    if !(nu > 0.0) {
        return Err(Error::Hypothesis(format!("nu(r0^2) = {nu} is not positive")));
    }
    Ok(((c_s * c_s - c * c) / nu).max(0.0).sqrt())
}

/// Default grid `[-X, X]` with `X = max(20, 30 / lambda)` and 4096 nodes.
pub fn default_grid(model: &NonlinearModel, c: f64) -> Result<(f64, usize)> {
    let lambda = expected_decay_rate(model, c)?;
    Ok(((30.0 / lambda).max(20.0), 4096))
}

/// A traveling wave `u_c` described in the `p` parametrization; no grid.
#[derive(Debug, Clone)]
pub struct TravelingWave {
    pub model: NonlinearModel,
    pub c: f64,
    pub root: BranchRoot,
    /// `|xi_c|`.
    a: f64,
    /// `mu_c^2 = r0^2 + xi_c`, exact zero for the kink.
    mu_sq: f64,
    v_d1: f64,
    v_d2: f64,
    v_d3: f64,
}

/// Pointwise state of the wave at parameter `p`.
#[derive(Debug, Clone, Copy)]
struct WavePoint {
    eta: f64,
    /// `|u|^2 = r0^2 + eta`
    s: f64,
}

impl TravelingWave {
    /// Builds the wave for `0 <= c < c_s` after checking the hypotheses.
    pub fn new(model: &NonlinearModel, c: f64) -> Result<Self> {
        let hyp = model.check_hypotheses(256)?;
        if !hyp.h2_ellipticity.pass {
            return Err(Error::Hypothesis(format!(
                "ellipticity fails: nu = {} at sigma = {}",
                hyp.h2_ellipticity.margin, hyp.h2_ellipticity.worst_sigma
            )));
        }
        if !hyp.h3_potential.pass {
            return Err(Error::Hypothesis(format!(
                "potential positivity fails: margin {} at sigma = {}",
                hyp.h3_potential.margin, hyp.h3_potential.worst_sigma
            )));
        }
        let root = branch_root(model, c)?;
        if !root.valid {
            return Err(Error::Hypothesis(format!("ellipticity fails on [xi(c), 0] at c = {c}")));
        }
        let slice = PotentialSlice::new(model, c)?;
        let mu_sq = if c == 0.0 { 0.0 } else { model.r0_sq() + root.xi_c };
        Ok(Self {
            model: model.clone(),
            c,
            root,
            a: -root.xi_c,
            mu_sq,
            v_d1: slice.derivative(root.xi_c),
            v_d2: slice.second_derivative(root.xi_c),
            v_d3: slice.third_derivative(root.xi_c),
        })
    }

    pub fn is_kink(&self) -> bool {
        self.c == 0.0
    }

    pub fn mu(&self) -> f64 {
        self.mu_sq.sqrt()
    }

    pub fn xi_c(&self) -> f64 {
        self.root.xi_c
    }

    #[inline]
    fn point(&self, p: f64) -> WavePoint {
        let t = p.tanh();
        let ch = p.cosh();
        let sech2 = if ch.is_finite() { 1.0 / (ch * ch) } else { 0.0 };
        let delta = self.a * t * t;
        WavePoint {
            eta: -self.a * sech2,
            s: self.mu_sq + delta,
        }
    }

    #[inline]
    fn potential(&self, eta: f64, s: f64) -> f64 {
        self.c * self.c * eta * eta - 4.0 * s * self.model.big_f_dev(eta)
    }

    /// `-V_c(eta) / eta^2 = 4 |u|^2 F / eta^2 - c^2`, with a Taylor form of
    /// `F / eta^2` near the background so the tail does not underflow.
    #[inline]
    fn tail_ratio(&self, eta: f64, s: f64) -> f64 {
        let m = &self.model;
        let s0 = m.r0_sq();
        let r = if eta.abs() < 1e-6 * s0 {
            -0.5 * m.f_prime(s0) - m.f_dprime(s0) * eta / 6.0
        } else {
            m.big_f_dev(eta) / (eta * eta)
        };
        4.0 * s * r - self.c * self.c
    }

    /// `dx/dp` at parameter `p`.
    #[inline]
    fn jacobian(&self, p: f64) -> f64 {
        let t = p.tanh();
        let delta_over_a = t * t;
        let w = self.point(p);
        let nu = self.model.nu(w.s);
        if delta_over_a < TAYLOR_SWITCH {
            let d = self.a * delta_over_a;
            let q = -self.v_d1 - self.v_d2 * d / 2.0 - self.v_d3 * d * d / 6.0;
            2.0 * nu.sqrt() * w.eta.abs() / (self.a * q).sqrt()
        } else {
            2.0 * nu.sqrt() * t / self.tail_ratio(w.eta, w.s).sqrt()
        }
    }

    /// `d theta / dp`.
    #[inline]
    fn theta_rate(&self, p: f64) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        let w = self.point(p);
        self.c * w.eta / (2.0 * w.s) * self.jacobian(p)
    }

    fn tail_cut(&self) -> f64 {
        // sech^2 p below 1e-40
        47.0
    }

    /// Branch momentum `P_c = c int_R eta^2 / (2 |u|^2) dx`; the renormalized
    /// momentum of the sampled field is `-P_c`.
    pub fn momentum(&self) -> Result<f64> {
        if self.c == 0.0 {
            return Ok(std::f64::consts::PI * self.model.r0_sq());
        }
        let r = integrate(
            |p| {
                let w = self.point(p);
                w.eta * w.eta / w.s * self.jacobian(p)
            },
            0.0,
            self.tail_cut(),
            quad_opts(),
        )?;
        Ok(self.c * r.value)
    }

    /// Energy `E(u_c) = 4 int_0^inf F(|u|^2) dx`.
    pub fn energy(&self) -> Result<f64> {
        let r = integrate(
            |p| {
                let w = self.point(p);
                self.model.big_f_dev(w.eta) * self.jacobian(p)
            },
            0.0,
            self.tail_cut(),
            quad_opts(),
        )?;
        Ok(4.0 * r.value)
    }

    /// Phase gained over the half line, `theta(+inf)`.
    pub fn half_phase(&self) -> Result<f64> {
        if self.c == 0.0 {
            return Ok(0.0);
        }
        Ok(integrate(|p| self.theta_rate(p), 0.0, self.tail_cut(), quad_opts())?.value)
    }

    /// Amplitude quantities and field derivatives at `p` (for `x >= 0`).
    fn node(&self, p: f64, theta: f64) -> [Complex64; 3] {
        let m = &self.model;
        let w = self.point(p);
        let s = w.s;
        let nu = m.nu(s);
        let nu_s = m.nu_prime(s);
        if self.is_kink() {
            let rho = self.model.r0() * p.tanh();
            let big_f = m.big_f_dev(w.eta);
            let d1 = (big_f / nu).max(0.0).sqrt();
            let d2 = rho * (-m.f(s) * nu - big_f * nu_s) / (nu * nu);
            return [rho.into(), d1.into(), d2.into()];
        }
        let v = self.potential(w.eta, s);
        let eta_d1 = (-v / nu).max(0.0).sqrt();
        let slice_vp = {
            let xi = w.eta;
            2.0 * self.c * self.c * xi - 4.0 * m.big_f_dev(xi) + 4.0 * s * m.f(s)
        };
        let eta_d2 = -(slice_vp + nu_s * eta_d1 * eta_d1) / (2.0 * nu);
        let rho = s.sqrt();
        let rho_d1 = eta_d1 / (2.0 * rho);
        let rho_d2 = eta_d2 / (2.0 * rho) - eta_d1 * eta_d1 / (4.0 * rho * rho * rho);
        let r0sq = m.r0_sq();
        let th1 = 0.5 * self.c * (w.eta / s);
        let th2 = 0.5 * self.c * r0sq * eta_d1 / (s * s);
        let e = Complex64::from_polar(1.0, theta);
        [
            e * rho,
            e * Complex64::new(rho_d1, rho * th1),
            e * Complex64::new(rho_d2 - rho * th1 * th1, 2.0 * rho_d1 * th1 + rho * th2),
        ]
    }

    /// Phase slope at the center, `theta'(0)`.
    pub fn center_phase_slope(&self) -> f64 {
        if self.is_kink() {
            0.0
        } else {
            0.5 * self.c * self.root.xi_c / self.mu_sq
        }
    }
}

/// Tabulated map `p -> (x, theta)` with a monotone inverse.
#[derive(Debug, Clone)]
struct PTable {
    p: Vec<f64>,
    x: Vec<f64>,
    theta: Vec<f64>,
    inverse: Pchip,
}

impl PTable {
    fn build(wave: &TravelingWave, x_need: f64) -> Result<Self> {
        let mut p = vec![0.0];
        let mut x = vec![0.0];
        let mut theta = vec![0.0];
        let opts = quad_opts();
        while *x.last().unwrap() < x_need && *p.last().unwrap() < P_CAP {
            let p0 = *p.last().unwrap();
            let p1 = p0 + P_STEP;
            let dx = integrate(|q| wave.jacobian(q), p0, p1, opts)?.value;
            let dth = if wave.is_kink() {
                0.0
            } else {
                integrate(|q| wave.theta_rate(q), p0, p1, opts)?.value
            };
            if !(dx > 0.0) || !dx.is_finite() {
                return Err(Error::NonFinite(format!("dx/dp on [{p0}, {p1}]")));
            }
            p.push(p1);
            x.push(x.last().unwrap() + dx);
            theta.push(theta.last().unwrap() + dth);
        }
        let inverse = Pchip::new(x.clone(), p.clone())?;
        Ok(Self { p, x, theta, inverse })
    }

    fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// Solves `x(p) = x` for `p`; returns `(p, theta(p))`.
    fn invert(&self, wave: &TravelingWave, target: f64) -> Result<(f64, f64)> {
        let n = self.p.len();
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&target).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let (lo, hi) = (self.p[i], self.p[i + 1]);
        let mut p = self.inverse.eval(target).clamp(lo, hi);
        let opts = quad_opts();
        let mut converged = false;
        let mut r = f64::NAN;
        for _ in 0..30 {
            let xp = self.x[i] + integrate(|q| wave.jacobian(q), lo, p, opts)?.value;
            r = xp - target;
            let step = r / wave.jacobian(p);
            p = (p - step).clamp(lo, hi);
            if r.abs() <= 4e-15 * (1.0 + target.abs()) || step.abs() <= 1e-15 * (1.0 + p) {
                converged = true;
                break;
            }
        }
        if !converged && !(r.abs() <= 1e-13 * (1.0 + target.abs())) {
            return Err(Error::NonConvergence {
                iterations: 30,
                residual: r,
            });
        }
        let th = if wave.is_kink() {
            0.0
        } else {
            self.theta[i] + integrate(|q| wave.theta_rate(q), lo, p, opts)?.value
        };
        Ok((p, th))
    }
}

/// Field values with first two derivatives on a uniform table `x_k = k h`,
/// `x >= 0`, evaluated by quintic Hermite interpolation and extended to
/// `x < 0` by oddness (kink) or conjugate evenness (gray).
#[derive(Debug, Clone)]
pub struct DenseTable {
    h: f64,
    nodes: Vec<[Complex64; 3]>,
    odd: bool,
    far: Complex64,
}

impl DenseTable {
    fn build(wave: &TravelingWave, table: &PTable, extent: f64) -> Result<Self> {
        let slope = wave.center_phase_slope().abs();
        let h = if slope > 0.0 { 0.004f64.min(0.05 / slope) } else { 0.004 };
        let extent = extent.min(table.x_max());
        let count = (extent / h).floor() as usize + 1;
        let mut nodes = Vec::with_capacity(count);
        let mut far_theta = 0.0;
        for k in 0..count {
            let x = k as f64 * h;
            let (p, th) = if k == 0 { (0.0, 0.0) } else { table.invert(wave, x)? };
            nodes.push(wave.node(p, th));
            far_theta = th;
        }
        let r0 = wave.model.r0();
        let far = if wave.is_kink() {
            Complex64::new(r0, 0.0)
        } else {
            // beyond the table the remaining phase is below 1e-12 relative
            let _ = far_theta;
            Complex64::from_polar(r0, wave.half_phase()?)
        };
        Ok(Self {
            h,
            nodes,
            odd: wave.is_kink(),
            far,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn extent(&self) -> f64 {
        (self.nodes.len() - 1) as f64 * self.h
    }

    /// `(U, U', U'')` at `x`.
    pub fn eval3(&self, x: f64) -> [Complex64; 3] {
        let (v, neg) = self.eval3_pos(x.abs());
        if !(x < 0.0) || !neg {
            return v;
        }
        if self.odd {
            [-v[0], v[1], -v[2]]
        } else {
            [v[0].conj(), -v[1].conj(), v[2].conj()]
        }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.eval3(x)[0]
    }

    fn eval3_pos(&self, x: f64) -> ([Complex64; 3], bool) {
        let zero = Complex64::new(0.0, 0.0);
        let t_all = x / self.h;
        let last = self.nodes.len() - 1;
        if t_all >= last as f64 {
            return ([self.far, zero, zero], true);
        }
        let k = t_all.floor() as usize;
        let t = t_all - k as f64;
        let (a, b) = (&self.nodes[k], &self.nodes[k + 1]);
        let h = self.h;
        let (t2, t3) = (t * t, t * t * t);
        let (t4, t5) = (t3 * t, t3 * t2);
        let hb = [
            1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
            t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
            0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5),
            10.0 * t3 - 15.0 * t4 + 6.0 * t5,
            -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
            0.5 * (t3 - 2.0 * t4 + t5),
        ];
        let hd = [
            -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
            1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
            0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4),
            30.0 * t2 - 60.0 * t3 + 30.0 * t4,
            -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
            0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4),
        ];
        let hdd = [
            -60.0 * t + 180.0 * t2 - 120.0 * t3,
            -36.0 * t + 96.0 * t2 - 60.0 * t3,
            0.5 * (2.0 - 18.0 * t + 36.0 * t2 - 20.0 * t3),
            60.0 * t - 180.0 * t2 + 120.0 * t3,
            -24.0 * t + 84.0 * t2 - 60.0 * t3,
            0.5 * (6.0 * t - 24.0 * t2 + 20.0 * t3),
        ];
        let comb = |w: &[f64; 6]| {
            a[0] * w[0]
                + a[1] * (h * w[1])
                + a[2] * (h * h * w[2])
                + b[0] * w[3]
                + b[1] * (h * w[4])
                + b[2] * (h * h * w[5])
        };
        ([comb(&hb), comb(&hd) / h, comb(&hdd) / (h * h)], true)
    }
}

/// Which family a profile belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ProfileKind {
    Kink,
    Gray,
}

/// Sampled traveling wave on a symmetric grid.
#[derive(Debug, Clone)]
pub struct SolitonProfile {
    pub kind: ProfileKind,
    pub c: f64,
    pub model: NonlinearModel,
    pub grid: Grid,
    /// Complex field; real and odd for the kink.
    pub values: Vec<Complex64>,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub eta: Vec<f64>,
    pub mu_c: f64,
    pub xi_c: f64,
    /// Fitted decay rate of `|eta|`, when the grid tail allows a fit.
    pub decay_rate: Option<f64>,
    pub expected_decay_rate: f64,
    wave: Arc<TravelingWave>,
    table: Arc<DenseTable>,
}

impl SolitonProfile {
    fn build(model: &NonlinearModel, c: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(invalid(format!("x_max must be positive, got {x_max}")));
        }
        if n < 128 {
            return Err(invalid(format!("profiles need n >= 128, got {n}")));
        }
        let grid = Grid::symmetric(x_max, n)?;
        let wave = TravelingWave::new(model, c)?;
        let lambda = expected_decay_rate(model, c)?;
        // cover shifted sampling up to one grid width, and the decay tail
        let extent = 2.0 * x_max + 2.0;
        let ptable = PTable::build(&wave, extent.max(40.0 / lambda))?;
        let table = DenseTable::build(&wave, &ptable, extent)?;
        let values: Vec<Complex64> = (0..n).map(|j| table.eval(grid.x(j))).collect();
        let r0sq = model.r0_sq();
        let amplitude: Vec<f64> = values.iter().map(|v| v.norm()).collect();
        let phase: Vec<f64> = if c == 0.0 {
            vec![0.0; n]
        } else {
            // continuous phase: primitive of theta' evaluated exactly
            (0..n)
                .map(|j| {
                    let x = grid.x(j);
                    let (p, th) = ptable.invert(&wave, x.abs()).unwrap_or((0.0, values[j].arg().abs()));
                    let _ = p;
                    if x < 0.0 {
                        -th
                    } else {
                        th
                    }
                })
                .collect()
        };
        let eta: Vec<f64> = values
            .iter()
            .map(|v| {
                // |u|^2 - r0^2 without cancellation for the kink
                v.norm_sqr() - r0sq
            })
            .collect();
        let mut prof = Self {
            kind: if c == 0.0 { ProfileKind::Kink } else { ProfileKind::Gray },
            c,
            model: model.clone(),
            grid,
            values,
            amplitude,
            phase,
            eta,
            mu_c: wave.mu(),
            xi_c: wave.xi_c(),
            decay_rate: None,
            expected_decay_rate: lambda,
            wave: Arc::new(wave),
            table: Arc::new(table),
        };
        prof.decay_rate = decay_rate_fit(&prof).ok().map(|r| r.0);
        Ok(prof)
    }

    /// Field `u(x)` from the dense table (any `x`).
    pub fn eval(&self, x: f64) -> Complex64 {
        self.table.eval(x)
    }

    /// `(u, u', u'')` at `x`.
    pub fn eval3(&self, x: f64) -> [Complex64; 3] {
        self.table.eval3(x)
    }

    pub fn wave(&self) -> &TravelingWave {
        &self.wave
    }

    pub fn table(&self) -> &DenseTable {
        &self.table
    }

    pub fn r0(&self) -> f64 {
        self.model.r0()
    }

    /// The sampled field as a [`FieldState`] on the profile grid.
    pub fn field(&self) -> FieldState {
        FieldState {
            grid: self.grid,
            values: self.values.clone(),
            r0: self.model.r0(),
            boundary: BoundaryKind::Background,
        }
    }
}

/// Kink `u_0` on `[-x_max, x_max]` with `n` nodes.
pub fn kink_profile(model: &NonlinearModel, x_max: f64, n: usize) -> Result<SolitonProfile> {
    SolitonProfile::build(model, 0.0, x_max, n)
}

/// Gray soliton `u_c`, `0 < c < c_s`.
pub fn gray_profile(model: &NonlinearModel, c: f64, x_max: f64, n: usize) -> Result<SolitonProfile> {
    if !(c > 0.0) {
        return Err(invalid(format!("gray profiles need c > 0, got {c}")));
    }
    SolitonProfile::build(model, c, x_max, n)
}

/// Kink for `c = 0`, gray soliton otherwise.
pub fn soliton_profile(model: &NonlinearModel, c: f64, x_max: f64, n: usize) -> Result<SolitonProfile> {
    if c == 0.0 {
        kink_profile(model, x_max, n)
    } else {
        gray_profile(model, c, x_max, n)
    }
}

/// Fitted and expected decay rate of `|eta|`. The fit is the least-squares
/// slope of `-ln |eta|` over `x in [0.3 X, 0.8 X]`.
pub fn decay_rate_fit(profile: &SolitonProfile) -> Result<(f64, f64)> {
    let expected = profile.expected_decay_rate;
    let x_max = profile.grid.x_end();
    if x_max < 10.0 / expected {
        return Err(invalid(format!(
            "grid half-width {x_max} is shorter than 10 / rate = {}",
            10.0 / expected
        )));
    }
    let (lo, hi) = (0.3 * x_max, 0.8 * x_max);
    let mut pts = Vec::new();
    for (j, &e) in profile.eta.iter().enumerate() {
        let x = profile.grid.x(j);
        if x >= lo && x <= hi {
            let a = e.abs();
            if !(a >= 1e-14) {
                return Err(Error::Resolution { x, jump: a });
            }
            pts.push((x, -a.ln()));
        }
    }
    if pts.len() < 2 {
        return Err(invalid("decay window holds fewer than two samples"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok((sxy / sxx, expected))
}

/// Samples `u(x - shift) e^{i phase_offset}` on the profile grid. Beyond the
/// dense table the field is held at its background value.
pub fn sample_field(profile: &SolitonProfile, phase_offset: f64, shift: f64) -> Result<FieldState> {
    let g = profile.grid;
    if !shift.is_finite() || shift.abs() > g.x_end() {
        return Err(invalid(format!("shift {shift} outside the grid range")));
    }
    let rot = Complex64::from_polar(1.0, phase_offset);
    let values = (0..g.n).map(|j| profile.table.eval(g.x(j) - shift) * rot).collect();
    FieldState::new(g, values, profile.model.r0(), BoundaryKind::Background)
}

/// Same as [`sample_field`] on an arbitrary grid.
pub fn sample_on_grid(profile: &SolitonProfile, grid: Grid, phase_offset: f64, shift: f64) -> Result<FieldState> {
    let rot = Complex64::from_polar(1.0, phase_offset);
    let values = (0..grid.n)
        .map(|j| profile.table.eval(grid.x(j) - shift) * rot)
        .collect();
    FieldState::new(grid, values, profile.model.r0(), BoundaryKind::Background)
}
