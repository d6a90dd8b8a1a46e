use rayon::prelude::*;

use super::matrix::{axpy, dot, DenseMatrix};
use crate::error::{Error, Result};

/// Default panel width for the blocked factorization.
pub const DEFAULT_BLOCK: usize = 64;

/// Relative tolerance on `max|a_ij - a_ji| / ‖A‖_F` accepted as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Where the entries of a factor came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorSource {
    /// Computed by factorizing `H + lambda I`.
    Exact { lambda: f64 },
    /// Evaluated from an interpolation model at `lambda`.
    Interpolated { lambda: f64 },
    /// Built directly from entries (tests, unvectorization).
    Unspecified,
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`, stored densely.
///
/// Factors produced by [`cholesky`] have a strictly positive diagonal.
/// Interpolated factors carry no such guarantee; see
/// [`CholeskyFactor::min_abs_diagonal`].
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    l: DenseMatrix,
    source: FactorSource,
}

impl CholeskyFactor {
    /// Wraps a square matrix, zeroing anything above the diagonal.
    pub fn from_lower(mut l: DenseMatrix, source: FactorSource) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::NotSquare {
                rows: l.rows(),
                cols: l.cols(),
            });
        }
        let h = l.rows();
        for j in 1..h {
            l.col_mut(j)[..j].fill(0.0);
        }
        Ok(Self { l, source })
    }

    pub(crate) fn from_lower_unchecked(l: DenseMatrix, source: FactorSource) -> Self {
        Self { l, source }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &DenseMatrix {
        &self.l
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.l
    }

    pub fn source(&self) -> FactorSource {
        self.source
    }

    /// The λ of an exact factorization; `None` for interpolated factors.
    pub fn lambda(&self) -> Option<f64> {
        match self.source {
            FactorSource::Exact { lambda } => Some(lambda),
            _ => None,
        }
    }

    pub fn is_interpolated(&self) -> bool {
        matches!(self.source, FactorSource::Interpolated { .. })
    }

    /// Smallest |L_ii| and its index.
    pub fn min_abs_diagonal(&self) -> (usize, f64) {
        (0..self.dim())
            .map(|i| (i, self.l[(i, i)].abs()))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let lt = self.l.transpose();
        self.l.matmul(&lt).expect("square factor")
    }

    /// Solves `L Lᵀ θ = g`.
    pub fn solve(&self, g: &[f64]) -> Result<Vec<f64>> {
        solve_chol(self, g)
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Uses the blocked right-looking variant with [`DEFAULT_BLOCK`] columns per
/// panel; small matrices fall through to a single unblocked panel.
pub fn cholesky(a: &DenseMatrix) -> Result<CholeskyFactor> {
    cholesky_blocked(a, DEFAULT_BLOCK)
}

/// Factorizes `a + shift * I` without a separate copy of `a`.
pub fn cholesky_shifted(a: &DenseMatrix, shift: f64) -> Result<CholeskyFactor> {
    check_symmetric(a)?;
    let mut w = a.add_diagonal(shift);
    factor_in_place(&mut w, DEFAULT_BLOCK)?;
    Ok(CholeskyFactor::from_lower_unchecked(
        w,
        FactorSource::Exact { lambda: shift },
    ))
}

/// Unblocked right-looking Cholesky.
pub fn cholesky_unblocked(a: &DenseMatrix) -> Result<CholeskyFactor> {
    cholesky_blocked(a, usize::MAX)
}

/// Blocked right-looking Cholesky with panel width `block`.
pub fn cholesky_blocked(a: &DenseMatrix, block: usize) -> Result<CholeskyFactor> {
    check_symmetric(a)?;
    let mut w = a.clone();
    factor_in_place(&mut w, block.max(1))?;
    Ok(CholeskyFactor::from_lower_unchecked(
        w,
        FactorSource::Exact { lambda: 0.0 },
    ))
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOL * a.frobenius_norm() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Overwrites the lower triangle of `w` with its Cholesky factor and clears
/// the strict upper triangle. Only the lower triangle of the input is read.
fn factor_in_place(w: &mut DenseMatrix, block: usize) -> Result<()> {
    let h = w.rows();
    let data = w.as_mut_slice();
    let mut k = 0;
    while k < h {
        let nb = block.min(h - k);
        factor_diagonal_block(data, h, k, nb)?;
        let end = k + nb;
        if end < h {
            // Panel solve: W[end.., k..end] <- W[end.., k..end] * L11⁻ᵀ
            for j in k..end {
                let (left, right) = data.split_at_mut(j * h);
                let d = right[j];
                let cj = &mut right[end..h];
                for p in k..j {
                    let ljp = left[p * h + j];
                    if ljp != 0.0 {
                        axpy(-ljp, &left[p * h + end..p * h + h], cj);
                    }
                }
                for v in cj.iter_mut() {
                    *v /= d;
                }
            }
            // Trailing update of the lower triangle, one column per task.
            let (left, right) = data.split_at_mut(end * h);
            let panel = &*left;
            right.par_chunks_mut(h).enumerate().for_each(|(off, col)| {
                let j = end + off;
                for p in k..end {
                    let ljp = panel[p * h + j];
                    if ljp != 0.0 {
                        axpy(-ljp, &panel[p * h + j..p * h + h], &mut col[j..h]);
                    }
                }
            });
        }
        k = end;
    }
    for j in 1..h {
        data[j * h..j * h + j].fill(0.0);
    }
    Ok(())
}

fn factor_diagonal_block(data: &mut [f64], h: usize, k: usize, nb: usize) -> Result<()> {
    let end = k + nb;
    for j in k..end {
        let d = data[j * h + j];
        if d.is_nan() || d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        data[j * h + j] = ljj;
        for v in &mut data[j * h + j + 1..j * h + end] {
            *v /= ljj;
        }
        // Right-looking update restricted to the diagonal block.
        let (left, right) = data.split_at_mut((j + 1) * h);
        let cj = &left[j * h..];
        for c in (j + 1)..end {
            let lcj = cj[c];
            if lcj != 0.0 {
                let off = (c - j - 1) * h;
                axpy(-lcj, &cj[c..end], &mut right[off + c..off + end]);
            }
        }
    }
    Ok(())
}

/// Solves `L Lᵀ θ = g` by forward then back substitution.
pub fn solve_chol(factor: &CholeskyFactor, g: &[f64]) -> Result<Vec<f64>> {
    let h = factor.dim();
    if g.len() != h {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side of length {} for a factor of order {h}",
            g.len()
        )));
    }
    let l = factor.matrix();
    let mut w = g.to_vec();
    forward_substitute(l, &mut w);
    back_substitute_transposed(l, &mut w);
    Ok(w)
}

/// In place `w <- L⁻¹ w`, column oriented.
pub fn forward_substitute(l: &DenseMatrix, w: &mut [f64]) {
    let h = l.rows();
    for j in 0..h {
        let col = l.col(j);
        let wj = w[j] / col[j];
        w[j] = wj;
        if wj != 0.0 {
            axpy(-wj, &col[j + 1..], &mut w[j + 1..]);
        }
    }
}

/// In place `w <- L⁻ᵀ w`.
pub fn back_substitute_transposed(l: &DenseMatrix, w: &mut [f64]) {
    let h = l.rows();
    for j in (0..h).rev() {
        let col = l.col(j);
        let s = dot(&col[j + 1..], &w[j + 1..]);
        w[j] = (w[j] - s) / col[j];
    }
}
