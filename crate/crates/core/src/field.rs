//! Complex fields sampled on uniform grids.

use crate::error::{invalid, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// How stencils treat samples beyond the grid ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BoundaryKind {
    /// Ends are held at the background; off-grid samples copy the nearest end.
    #[default]
    Background,
    /// Grid wraps around.
    Periodic,
}

/// Uniform grid `x_j = x0 + j dx`, `j = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid {
    /// Symmetric grid of `n` nodes covering `[-x_max, x_max]`.
    pub fn symmetric(x_max: f64, n: usize) -> Result<Self> {
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(invalid(format!("x_max must be positive, got {x_max}")));
        }
        if n < 16 {
            return Err(invalid(format!("grid needs at least 16 nodes, got {n}")));
        }
        Ok(Self {
            x0: -x_max,
            dx: 2.0 * x_max / (n - 1) as f64,
            n,
        })
    }

    /// Node `j`. Computed from the grid center so that symmetric grids give
    /// exactly antisymmetric abscissae.
    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        let m = 0.5 * (self.n - 1) as f64;
        let mut xc = self.x0 + m * self.dx;
        if xc.abs() <= 1e-12 * self.dx {
            xc = 0.0;
        }
        xc + (j as f64 - m) * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn x_end(&self) -> f64 {
        self.x(self.n - 1)
    }

    /// Node nearest to `x = 0`; ties go to the lower index.
    pub fn origin_index(&self) -> usize {
        let t = -self.x0 / self.dx;
        let lo = t.floor().clamp(0.0, (self.n - 1) as f64) as usize;
        let hi = (lo + 1).min(self.n - 1);
        if (self.x(hi)).abs() < (self.x(lo)).abs() {
            hi
        } else {
            lo
        }
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n
            && (self.dx - other.dx).abs() <= 1e-12 * self.dx
            && (self.x0 - other.x0).abs() <= 1e-9 * self.dx.max(1e-300)
    }
}

/// A complex field on a uniform grid with background modulus `r0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub r0: f64,
    pub boundary: BoundaryKind,
}

impl FieldState {
    pub fn new(grid: Grid, values: Vec<Complex64>, r0: f64, boundary: BoundaryKind) -> Result<Self> {
        if values.len() != grid.n {
            return Err(invalid(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.n
            )));
        }
        if grid.n < 16 {
            return Err(invalid("a field needs at least 16 samples"));
        }
        if !(grid.dx > 0.0) {
            return Err(invalid("grid spacing must be positive"));
        }
        if !(r0 > 0.0) {
            return Err(invalid("background amplitude r0 must be positive"));
        }
        if let Some(j) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite(format!("field sample {j}")));
        }
        Ok(Self {
            grid,
            values,
            r0,
            boundary,
        })
    }

    /// Samples `g(x)` on `grid`.
    pub fn from_fn(grid: Grid, r0: f64, boundary: BoundaryKind, g: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = (0..grid.n).map(|j| g(grid.x(j))).collect();
        Self::new(grid, values, r0, boundary)
    }

    /// The constant field `r0 e^{i phi}`.
    pub fn constant(grid: Grid, r0: f64, phi: f64) -> Result<Self> {
        Self::from_fn(grid, r0, BoundaryKind::Background, |_| Complex64::from_polar(r0, phi))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min_modulus(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min)
    }

    /// Largest deviation `||v| - r0|` at the two grid ends.
    pub fn boundary_defect(&self) -> f64 {
        let a = (self.values[0].norm() - self.r0).abs();
        let b = (self.values[self.len() - 1].norm() - self.r0).abs();
        a.max(b)
    }

    pub fn check_same_grid(&self, other: &FieldState) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch(format!(
                "({}, {}, {}) vs ({}, {}, {})",
                self.grid.x0, self.grid.dx, self.grid.n, other.grid.x0, other.grid.dx, other.grid.n
            )));
        }
        Ok(())
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        Self {
            grid: self.grid,
            values,
            r0: self.r0,
            boundary: self.boundary,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_tie_goes_low() {
        let g = Grid::symmetric(10.0, 4096).unwrap();
        let j = g.origin_index();
        assert_eq!(j, 2047);
        assert!((g.x(j) + g.dx / 2.0).abs() < 1e-12);
        let g = Grid::symmetric(10.0, 17).unwrap();
        assert_eq!(g.origin_index(), 8);
    }

    #[test]
    fn rejects_short_grids() {
        assert!(Grid::symmetric(1.0, 8).is_err());
    }
}
