//! Dark and black solitons of one-dimensional quasilinear Schrödinger
//! equations
//!
//! ```text
//! i d_t Psi + d_xx Psi + Psi f(|Psi|^2) + kappa Psi h'(|Psi|^2) d_xx h(|Psi|^2) = 0,
//! |Psi| -> r0 as |x| -> inf.
//! ```
//!
//! Modules follow the workflow: [`model`] (nonlinearities, hypotheses),
//! [`potential`] (traveling-wave potential and its branch root), [`profile`]
//! (kink and gray profiles), [`functionals`] (energy, momenta, distances),
//! [`criterion`] (slope of the momentum at `c = 0`) and [`evolution`] (time
//! stepping and the stability experiment).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops read closer to the stencil and band formulas
#![allow(clippy::needless_range_loop)]

pub mod criterion;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod field;
pub mod functionals;
pub mod model;
pub mod numerics;
pub mod potential;
pub mod profile;

pub use criterion::{CriterionReport, Method, SweepRow, Verdict};
pub use error::{Error, Result};
pub use evolution::{EvolutionConfig, EvolutionTrace, Modulation, Scheme};
pub use field::{BoundaryKind, FieldState, Grid};
pub use functionals::{FunctionalReport, PathologyKind};
pub use model::{builtin_model, BuiltinCase, HypothesisReport, ModelDescriptor, NonlinearModel};
pub use num_complex::Complex64;
pub use potential::{BranchRoot, Existence, PotentialSlice};
pub use profile::{ProfileKind, SolitonProfile};
