use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("iteration did not converge after {iterations} iterations")]
    ConvergenceFailure { iterations: usize },

    #[error("invalid rank {k} for a {rows}x{cols} matrix")]
    InvalidRank { k: usize, rows: usize, cols: usize },

    #[error("invalid recursion threshold h0 = {0}")]
    InvalidThreshold(usize),

    #[error("duplicate or non-positive sample lambda {0:e}")]
    DegenerateSamples(f64),

    #[error("{samples} samples cannot determine a degree-{degree} polynomial")]
    InsufficientSamples { samples: usize, degree: usize },

    #[error("interpolated factor is singular: |L[{index},{index}]| = {value:e}")]
    SingularInterpolant { index: usize, value: f64 },

    #[error("validation set is empty")]
    EmptyValidationSet,

    #[error("invalid regularization parameter {0:e}")]
    InvalidLambda(f64),

    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),

    #[error("invalid fold plan: {0}")]
    InvalidFolds(String),

    #[error("invalid search parameters: {0}")]
    InvalidSearch(String),

    #[error("bound hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("matrix order {order} exceeds the dense-operator limit {limit}")]
    OrderTooLarge { order: usize, limit: usize },
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// malformed arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NotSymmetric { .. }
                | Error::NonFinite { .. }
                | Error::ConvergenceFailure { .. }
                | Error::SingularInterpolant { .. }
                | Error::DegenerateSamples(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
