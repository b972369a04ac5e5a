//! Fourth-order central differences on uniform grids.
//!
//! The first-derivative operator `D` uses the stencil
//! `(u[k-2] - 8u[k-1] + 8u[k+1] - u[k+2]) / (12 dx)`. Off-grid samples are
//! replaced by the nearest endpoint ([`BoundaryKind::Background`]) or wrapped
//! ([`BoundaryKind::Periodic`]). The second-derivative operator used by the
//! evolution is `Lap = -D^T D`, so the discrete energy gradient is exact.

use crate::field::BoundaryKind;
use std::ops::{Add, Mul, Sub};

pub const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];

pub trait Sample: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T> Sample for T where T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

#[inline]
pub fn map_index(k: isize, n: usize, bc: BoundaryKind) -> usize {
    let n = n as isize;
    match bc {
        BoundaryKind::Background => k.clamp(0, n - 1) as usize,
        BoundaryKind::Periodic => k.rem_euclid(n) as usize,
    }
}

/// `D u`.
pub fn d1<T: Sample>(u: &[T], dx: f64, bc: BoundaryKind) -> Vec<T> {
    let n = u.len();
    let s = 1.0 / dx;
    let mut out = vec![T::default(); n];
    // interior without index mapping
    for k in 2..n.saturating_sub(2) {
        out[k] = ((u[k + 1] - u[k - 1]) * (8.0 / 12.0) - (u[k + 2] - u[k - 2]) * (1.0 / 12.0)) * s;
    }
    let edge: Vec<usize> = (0..n.min(2)).chain(n.saturating_sub(2).max(2)..n).collect();
    for k in edge {
        let mut acc = T::default();
        for (m, c) in D1.iter().enumerate() {
            if *c != 0.0 {
                acc = acc + u[map_index(k as isize + m as isize - 2, n, bc)] * *c;
            }
        }
        out[k] = acc * s;
    }
    out
}

/// `D^T w`, the exact transpose of [`d1`] including the boundary mapping.
pub fn d1_transpose<T: Sample>(w: &[T], dx: f64, bc: BoundaryKind) -> Vec<T> {
    let n = w.len();
    let s = 1.0 / dx;
    let mut out = vec![T::default(); n];
    for k in 2..n.saturating_sub(2) {
        // contributions of interior rows whose stencil stays in range
        let wk = w[k] * s;
        out[k - 2] = out[k - 2] + wk * D1[0];
        out[k - 1] = out[k - 1] + wk * D1[1];
        out[k + 1] = out[k + 1] + wk * D1[3];
        out[k + 2] = out[k + 2] + wk * D1[4];
    }
    let edge: Vec<usize> = (0..n.min(2)).chain(n.saturating_sub(2).max(2)..n).collect();
    for k in edge {
        let wk = w[k] * s;
        for (m, c) in D1.iter().enumerate() {
            if *c != 0.0 {
                let j = map_index(k as isize + m as isize - 2, n, bc);
                out[j] = out[j] + wk * *c;
            }
        }
    }
    out
}

/// `Lap u = -D^T D u`, a nine-point fourth-order approximation of `u''`.
pub fn laplacian<T: Sample>(u: &[T], dx: f64, bc: BoundaryKind) -> Vec<T> {
    let du = d1(u, dx, bc);
    let mut out = d1_transpose(&du, dx, bc);
    for v in out.iter_mut() {
        *v = *v * -1.0;
    }
    out
}

/// Plain sixth-order central first derivative on interior nodes (zero on the
/// three nodes nearest each end). Used for residual diagnostics.
pub fn d1_order6(u: &[f64], dx: f64) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    for k in 3..n.saturating_sub(3) {
        out[k] = (45.0 * (u[k + 1] - u[k - 1]) - 9.0 * (u[k + 2] - u[k - 2]) + (u[k + 3] - u[k - 3])) / (60.0 * dx);
    }
    out
}

/// Sixth-order central second derivative on interior nodes.
pub fn d2_order6(u: &[f64], dx: f64) -> Vec<f64> {
    let n = u.len();
    let mut out = vec![0.0; n];
    for k in 3..n.saturating_sub(3) {
        out[k] = (2.0 * (u[k + 3] + u[k - 3]) - 27.0 * (u[k + 2] + u[k - 2]) + 270.0 * (u[k + 1] + u[k - 1])
            - 490.0 * u[k])
            / (180.0 * dx * dx);
    }
    out
}
