//! Numerical building blocks: quadrature, root finding, interpolation,
//! banded linear algebra and finite differences.

pub mod banded;
pub mod dense;
pub mod fd;
pub mod interp;
pub mod quad;
pub mod roots;

pub use banded::{BandLu, BandMatrix};
pub use dense::DenseLu;
pub use interp::Pchip;
pub use quad::{gauss_legendre, integrate, integrate_default, QuadOptions, QuadResult};
pub use roots::{brent, golden_section_min};
