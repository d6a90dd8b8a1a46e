//! Ridge regression regularization paths with interpolated Cholesky factors.
//!
//! For a ridge problem with Hessian `H = XᵀX` and gradient `g = Xᵀy`, every
//! candidate λ needs a solve of `(H + λI) θ = g`. Instead of factorizing
//! `H + λI` for every λ, [`pichol`] factorizes a handful of sample values,
//! fits one low-degree polynomial in λ per lower-triangular entry of the
//! factor, and evaluates those polynomials everywhere else.
//!
//! Modules:
//!
//! * [`linalg`]: dense matrices, Cholesky, triangular solves, SVD variants.
//! * [`trivec`]: row-wise, full-matrix and recursive triangular layouts.
//! * [`pichol`]: polynomial fit of Cholesky factors and their evaluation.
//! * [`ridge`]: problem assembly and the five solution backends.
//! * [`cvsearch`]: cross-validated λ search drivers.
//! * [`theory`]: numerical checks of the Cholesky-map derivatives and the
//!   interpolation error bound.
//! * [`datagen`]: seeded synthetic problems.

pub mod cvsearch;
pub mod datagen;
pub mod error;
pub mod linalg;
pub mod pichol;
pub mod ridge;
pub mod theory;
pub mod trivec;

pub use error::{Error, Result};
pub use linalg::{CholeskyFactor, DenseMatrix, SvdFactors};
pub use pichol::{FitDiagnostics, InterpModel};
pub use ridge::{Backend, RidgeProblem, Solution};
pub use trivec::{LayoutKind, VecLayout};
pub use cvsearch::{CvReport, FoldPlan, LambdaGrid, Method, Metric};
pub use datagen::{SynthData, SynthSpec};
