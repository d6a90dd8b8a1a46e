//! Ridge problems `(H + λI) θ = g` and their solution backends.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{
    axpy, cholesky_shifted, norm2, randomized_svd, solve_chol, svd, truncated_svd, DenseMatrix,
    SvdFactors,
};
use crate::pichol::InterpModel;

/// Diagonal magnitude below which an interpolated factor is rejected.
pub const SINGULAR_DIAGONAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Chol,
    PIChol,
    Svd,
    TSvd,
    RSvd,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Chol => "chol",
            Backend::PIChol => "pichol",
            Backend::Svd => "svd",
            Backend::TSvd => "tsvd",
            Backend::RSvd => "rsvd",
        })
    }
}

/// Design matrix, targets, and the cached `H = XᵀX`, `g = Xᵀy`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeProblem {
    x: DenseMatrix,
    y: Vec<f64>,
    h: DenseMatrix,
    g: Vec<f64>,
}

impl RidgeProblem {
    /// Builds the problem from a design matrix that already carries any
    /// intercept column.
    pub fn assemble(x: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "design matrix is {}x{}",
                x.rows(),
                x.cols()
            )));
        }
        if y.len() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} targets for {} rows",
                y.len(),
                x.rows()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        let h = x.gram();
        let g = x.t_matvec(&y)?;
        Ok(RidgeProblem { x, y, h, g })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn hessian(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn gradient(&self) -> &[f64] {
        &self.g
    }

    /// Number of coefficients, `d + 1` with an intercept.
    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    pub fn samples(&self) -> usize {
        self.x.rows()
    }

    /// `‖(H + λI)θ − g‖ / ‖g‖` (absolute when `g = 0`).
    pub fn relative_residual(&self, theta: &[f64], lambda: f64) -> f64 {
        let mut r = self.h.matvec(theta).expect("theta has problem dimension");
        axpy(lambda, theta, &mut r);
        axpy(-1.0, &self.g, &mut r);
        let gn = norm2(&self.g);
        let rn = norm2(&r);
        if gn > 0.0 {
            rn / gn
        } else {
            rn
        }
    }

    fn solution(&self, theta: Vec<f64>, lambda: f64, backend: Backend) -> Result<Solution> {
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        let residual = self.relative_residual(&theta, lambda);
        Ok(Solution {
            theta,
            lambda,
            backend,
            residual,
        })
    }
}

/// Appends a column of ones to `x`.
pub fn append_intercept(x: &DenseMatrix) -> DenseMatrix {
    x.append_column(&vec![1.0; x.rows()])
        .expect("column length equals row count")
}

/// Ridge coefficients at one λ.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub backend: Backend,
    /// `‖(H + λI)θ − g‖ / ‖g‖`.
    pub residual: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidLambda(lambda));
    }
    Ok(())
}

/// Solves `(H + λI) θ = g` by Cholesky. λ = 0 requires positive-definite `H`.
pub fn solve_exact(p: &RidgeProblem, lambda: f64) -> Result<Solution> {
    check_lambda(lambda)?;
    let l = cholesky_shifted(&p.h, lambda)?;
    let theta = solve_chol(&l, &p.g)?;
    p.solution(theta, lambda, Backend::Chol)
}

/// Solves with the factor interpolated by `model` at `lambda`.
pub fn solve_interp(p: &RidgeProblem, model: &InterpModel, lambda: f64) -> Result<Solution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidLambda(lambda));
    }
    if model.layout().h() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model order {} for a problem of dimension {}",
            model.layout().h(),
            p.dim()
        )));
    }
    let l = model.eval(lambda);
    let (index, value) = l.min_abs_diagonal();
    if value < SINGULAR_DIAGONAL_TOL {
        return Err(Error::SingularInterpolant { index, value });
    }
    let theta = solve_chol(&l, &p.g)?;
    p.solution(theta, lambda, Backend::PIChol)
}

/// `θ = V diag(σ_i / (σ_i² + λ)) Uᵀ y` for SVD factors of the design matrix.
/// The backend tag follows the kind of factors supplied.
pub fn solve_svd(p: &RidgeProblem, f: &SvdFactors, lambda: f64) -> Result<Solution> {
    check_lambda(lambda)?;
    if f.u.rows() != p.samples() || f.v.rows() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "SVD factors {}x{} / {}x{} do not match problem {}x{}",
            f.u.rows(),
            f.u.cols(),
            f.v.rows(),
            f.v.cols(),
            p.samples(),
            p.dim()
        )));
    }
    let uty = f.u.t_matvec(&p.y)?;
    let weights: Vec<f64> = f
        .sigma
        .iter()
        .zip(&uty)
        .map(|(&s, &c)| {
            let den = s * s + lambda;
            if den > 0.0 {
                s / den * c
            } else {
                0.0
            }
        })
        .collect();
    let theta = f.v.matvec(&weights)?;
    let backend = if f.randomized {
        Backend::RSvd
    } else if f.truncated {
        Backend::TSvd
    } else {
        Backend::Svd
    };
    p.solution(theta, lambda, backend)
}

/// Full SVD of the design matrix, for reuse across λ values.
pub fn svd_factors(p: &RidgeProblem) -> Result<SvdFactors> {
    svd(&p.x)
}

pub fn solve_tsvd(p: &RidgeProblem, k: usize, lambda: f64) -> Result<Solution> {
    let f = truncated_svd(&p.x, k)?;
    solve_svd(p, &f, lambda)
}

pub fn solve_rsvd(
    p: &RidgeProblem,
    k: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
    lambda: f64,
) -> Result<Solution> {
    let f = randomized_svd(&p.x, k, oversample, power_iters, seed)?;
    solve_svd(p, &f, lambda)
}
