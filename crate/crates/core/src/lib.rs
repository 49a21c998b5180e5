//! Monte Carlo evaluation of Schrödinger semigroups `e^{-tH(V)}` acting on
//! sections of Hermitian vector bundles over a small catalog of model
//! Riemannian manifolds, together with numerical checks of the inequalities
//! that govern them (Kato and Khas'minskii bounds, semigroup domination,
//! smoothing estimates, exit times, holonomy ODE bounds).
//!
//! Conventions: every heat kernel and semigroup is generated by `Δ/2`, so a
//! Brownian increment over a step `h` has covariance `h·I` in an orthonormal
//! frame.

// NaN-rejecting `!(x > 0.0)` guards and index loops over small fixed
// dimensions are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

pub mod bundle;
pub mod error;
pub mod field;
pub mod geometry;
pub mod grammar;
pub mod holonomy;
pub mod kato;
pub mod linalg;
pub mod montecarlo;
pub mod oracle;
pub mod paths;
pub mod quad;
pub mod rng;
pub mod semigroup;

pub use error::{Error, Result};
pub use geometry::{Manifold, Point};
pub use linalg::{CMatrix, CVector, C64};
