//! Dense real linear algebra: column-major matrices, Cholesky factorization
//! with triangular solves, and full / truncated / randomized SVD.
//!
//! Everything here is a pure function of its inputs. Parallel kernels split
//! work by output column, so results do not depend on the thread count.

mod cholesky;
mod matrix;
mod svd;

pub use cholesky::{
    back_substitute_transposed, cholesky, cholesky_blocked, cholesky_shifted, cholesky_unblocked,
    forward_substitute, solve_chol, CholeskyFactor, FactorSource, DEFAULT_BLOCK, SYMMETRY_TOL,
};
pub use matrix::{axpy, dot, norm2, DenseMatrix};
pub use svd::{orthonormalize, randomized_svd, svd, truncated_svd, SvdFactors};
