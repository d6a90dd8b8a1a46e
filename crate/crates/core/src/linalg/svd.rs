use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::matrix::{axpy, dot, norm2, DenseMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const MAX_SUBSPACE_ITERS: usize = 5000;

/// Thin singular value decomposition `X ≈ U diag(σ) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// n × k, orthonormal columns.
    pub u: DenseMatrix,
    /// k values, non-increasing.
    pub sigma: Vec<f64>,
    /// cols(X) × k, orthonormal columns.
    pub v: DenseMatrix,
    pub truncated: bool,
    pub randomized: bool,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(σ) Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (j, &s) in self.sigma.iter().enumerate() {
            for v in us.col_mut(j) {
                *v *= s;
            }
        }
        us.matmul(&self.v.transpose()).expect("consistent factor shapes")
    }
}

/// Full thin SVD by one-sided (Hestenes) Jacobi rotations.
pub fn svd(x: &DenseMatrix) -> Result<SvdFactors> {
    if x.rows() >= x.cols() {
        let (u, sigma, v) = jacobi_tall(x)?;
        Ok(SvdFactors {
            u,
            sigma,
            v,
            truncated: false,
            randomized: false,
        })
    } else {
        let (v, sigma, u) = jacobi_tall(&x.transpose())?;
        Ok(SvdFactors {
            u,
            sigma,
            v,
            truncated: false,
            randomized: false,
        })
    }
}

/// Jacobi SVD of a matrix with rows >= cols.
fn jacobi_tall(x: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (m, n) = (x.rows(), x.cols());
    let mut a = x.clone();
    let mut v = DenseMatrix::identity(n);
    let eps = f64::EPSILON;
    // Columns below this squared norm are roundoff; rotating them can cycle.
    let floor = {
        let f = (m.max(n) as f64) * eps * x.frobenius_norm();
        f * f
    };
    // Dot products carry about √m·ε relative error; a stricter test can cycle.
    let tol = (m as f64).sqrt() * eps;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(a.col(p), a.col(p));
                let beta = dot(a.col(q), a.col(q));
                let gamma = dot(a.col(p), a.col(q));
                if gamma == 0.0
                    || gamma.abs() <= tol * (alpha * beta).sqrt()
                    || alpha.min(beta) <= floor
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_cols(&mut a, p, q, c, s);
                rotate_cols(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure {
            iterations: MAX_SWEEPS,
        });
    }

    let mut order: Vec<(usize, f64)> = (0..n).map(|j| (j, norm2(a.col(j)))).collect();
    order.sort_by(|l, r| r.1.total_cmp(&l.1).then(l.0.cmp(&r.0)));
    let sigma: Vec<f64> = order.iter().map(|&(_, s)| s).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let tiny = (m.max(n) as f64) * eps * smax;

    let mut u = DenseMatrix::zeros(m, n);
    let mut vs = DenseMatrix::zeros(n, n);
    let mut missing = Vec::new();
    for (dst, &(src, s)) in order.iter().enumerate() {
        vs.col_mut(dst).copy_from_slice(v.col(src));
        if s > tiny && s > 0.0 {
            for (o, &i) in u.col_mut(dst).iter_mut().zip(a.col(src)) {
                *o = i / s;
            }
        } else {
            missing.push(dst);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok((u, sigma, vs))
}

fn rotate_cols(a: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let m = a.rows();
    let data = a.as_mut_slice();
    let (left, right) = data.split_at_mut(q * m);
    let cp = &mut left[p * m..(p + 1) * m];
    let cq = &mut right[..m];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the listed columns with unit vectors orthogonal to all other columns.
fn complete_orthonormal(u: &mut DenseMatrix, missing: &[usize]) {
    let m = u.rows();
    let mut candidate = 0;
    for &j in missing {
        loop {
            let mut e = vec![0.0; m];
            e[candidate % m] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for k in 0..u.cols() {
                    if k == j {
                        continue;
                    }
                    let c = dot(u.col(k), &e);
                    axpy(-c, u.col(k), &mut e);
                }
            }
            let nrm = norm2(&e);
            if nrm > 1e-8 {
                for (o, v) in u.col_mut(j).iter_mut().zip(&e) {
                    *o = v / nrm;
                }
                break;
            }
            if candidate > 2 * m {
                break;
            }
        }
    }
}

/// Orthonormalizes the columns of `y` in place (classical Gram-Schmidt with
/// one reorthogonalization pass). Columns that vanish are replaced by unit
/// vectors orthogonal to the rest.
pub fn orthonormalize(y: &mut DenseMatrix) {
    let m = y.rows();
    let mut missing = Vec::new();
    for j in 0..y.cols() {
        let original = norm2(y.col(j));
        for _ in 0..2 {
            for k in 0..j {
                let (left, right) = y.as_mut_slice().split_at_mut(j * m);
                let qk = &left[k * m..(k + 1) * m];
                let cj = &mut right[..m];
                let c = dot(qk, cj);
                axpy(-c, qk, cj);
            }
        }
        let nrm = norm2(y.col(j));
        if nrm > 1e-13 * original && nrm > 0.0 {
            for v in y.col_mut(j) {
                *v /= nrm;
            }
        } else {
            y.col_mut(j).fill(0.0);
            missing.push(j);
        }
    }
    complete_orthonormal(y, &missing);
}

fn check_rank(x: &DenseMatrix, k: usize, limit: usize) -> Result<()> {
    if k == 0 || k > limit {
        return Err(Error::InvalidRank {
            k,
            rows: x.rows(),
            cols: x.cols(),
        });
    }
    Ok(())
}

fn truncate(f: SvdFactors, k: usize, randomized: bool) -> SvdFactors {
    SvdFactors {
        u: f.u.select_cols(0, k),
        sigma: f.sigma[..k].to_vec(),
        v: f.v.select_cols(0, k),
        truncated: true,
        randomized,
    }
}

/// Rayleigh-Ritz step: given orthonormal `basis` (cols(X) × b), returns the
/// SVD of `X basis` lifted back, i.e. approximate top singular triplets.
fn rayleigh_ritz(x: &DenseMatrix, basis: &DenseMatrix) -> Result<SvdFactors> {
    let b = x.matmul(basis)?;
    let inner = svd(&b)?;
    Ok(SvdFactors {
        v: basis.matmul(&inner.v)?,
        u: inner.u,
        sigma: inner.sigma,
        truncated: false,
        randomized: false,
    })
}

/// Top-`k` singular triplets by block subspace iteration with Rayleigh-Ritz
/// extraction. The block is widened beyond `k` to speed convergence; when it
/// spans the whole column space the result is exact after one step.
pub fn truncated_svd(x: &DenseMatrix, k: usize) -> Result<SvdFactors> {
    let full = x.rows().min(x.cols());
    check_rank(x, k, full)?;
    if k == full {
        let mut f = svd(x)?;
        f.truncated = true;
        return Ok(f);
    }
    let n = x.cols();
    let block = (2 * k + 5).min(full);
    let mut rng = ChaCha8Rng::seed_from_u64(0x0005_eed0_f75d);
    let mut basis = gaussian(n, block, &mut rng);
    orthonormalize(&mut basis);
    let scale = x.frobenius_norm().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SUBSPACE_ITERS {
        let f = rayleigh_ritz(x, &basis)?;
        // Residual ‖Xᵀ u_i − σ_i v_i‖ for the wanted triplets.
        let mut worst: f64 = 0.0;
        for i in 0..k {
            let mut r = x.t_matvec(f.u.col(i))?;
            axpy(-f.sigma[i], f.v.col(i), &mut r);
            worst = worst.max(norm2(&r));
        }
        if worst <= 1e-13 * scale || block == full {
            return Ok(truncate(f, k, false));
        }
        // One power step on XᵀX.
        let mut y = x.matmul(&f.v)?;
        orthonormalize(&mut y);
        basis = x.t_matmul(&y)?;
        orthonormalize(&mut basis);
    }
    Err(Error::ConvergenceFailure {
        iterations: MAX_SUBSPACE_ITERS,
    })
}

/// Randomized SVD (Gaussian range finder with power iterations).
pub fn randomized_svd(
    x: &DenseMatrix,
    k: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<SvdFactors> {
    let full = x.rows().min(x.cols());
    if k == 0 || k + oversample > full {
        return Err(Error::InvalidRank {
            k,
            rows: x.rows(),
            cols: x.cols(),
        });
    }
    let l = k + oversample;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = gaussian(x.cols(), l, &mut rng);
    let mut q = x.matmul(&omega)?;
    orthonormalize(&mut q);
    for _ in 0..power_iters {
        let mut z = x.t_matmul(&q)?;
        orthonormalize(&mut z);
        q = x.matmul(&z)?;
        orthonormalize(&mut q);
    }
    // B = Qᵀ X is l × cols; its SVD lifts to X's.
    let b = q.t_matmul(x)?;
    let inner = svd(&b)?;
    let f = SvdFactors {
        u: q.matmul(&inner.u)?,
        sigma: inner.sigma,
        v: inner.v,
        truncated: true,
        randomized: true,
    };
    Ok(truncate(f, k, true))
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}
