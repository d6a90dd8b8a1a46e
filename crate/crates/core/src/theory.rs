//! Numerical checks of the smoothness of `λ ↦ chol(A + λI)` and of the
//! resulting interpolation error bound.
//!
//! With `L = chol(A)` the derivative of the Cholesky map is the inverse of
//! `N_L : Γ ↦ ΓLᵀ + LΓᵀ`, which maps lower-triangular matrices onto
//! symmetric ones and is inverted in closed form by
//! `N_L⁻¹(Δ) = L Φ(L⁻¹ Δ L⁻ᵀ)`, where `Φ` keeps the lower triangle and halves
//! the diagonal. Higher derivatives use `S_X : B ↦ XBᵀ + BXᵀ`.
//!
//! Operator norms are taken with respect to the Frobenius norm on each
//! space, computed in coordinates where that norm is Euclidean: lower
//! triangular matrices by their `m(m+1)/2` entries, symmetric matrices by
//! their diagonal and `√2` times their strict lower part.
//!
//! Everything here is dense and restricted to order at most [`MAX_ORDER`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_shifted, forward_substitute, svd, CholeskyFactor, DenseMatrix, FactorSource};
use crate::pichol::{fit_with, Basis};
use crate::trivec::VecLayout;

/// Largest supported matrix order.
pub const MAX_ORDER: usize = 32;
/// Orders above this use power iteration for operator norms.
pub const SVD_NORM_LIMIT: usize = 16;
/// Default number of grid points when maximizing the remainder functional.
pub const DEFAULT_R_GRID: usize = 33;
/// Default number of swept λ values in a bound check.
pub const DEFAULT_SWEEP: usize = 21;

fn check_order(m: usize) -> Result<()> {
    if m > MAX_ORDER {
        return Err(Error::OrderTooLarge {
            order: m,
            limit: MAX_ORDER,
        });
    }
    Ok(())
}

/// The Kronecker sum `I ⊗ X + X ⊗ I` acting on column-major `vec(B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KronSumOp {
    x: DenseMatrix,
}

impl KronSumOp {
    pub fn new(x: DenseMatrix) -> Result<Self> {
        if !x.is_square() {
            return Err(Error::NotSquare {
                rows: x.rows(),
                cols: x.cols(),
            });
        }
        check_order(x.rows())?;
        Ok(KronSumOp { x })
    }

    /// Builds the operator from `vec(X)`, which must have square length.
    pub fn from_vec(v: &[f64]) -> Result<Self> {
        let m = (v.len() as f64).sqrt().round() as usize;
        if m * m != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} is not a vectorized square matrix",
                v.len()
            )));
        }
        Self::new(DenseMatrix::new(m, m, v.to_vec())?)
    }

    pub fn order(&self) -> usize {
        self.x.rows()
    }

    /// `vec(XB + BXᵀ)` for `v = vec(B)`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.order();
        if v.len() != m * m {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} for operator order {}",
                v.len(),
                m * m
            )));
        }
        let b = DenseMatrix::new(m, m, v.to_vec())?;
        let xb = self.x.matmul(&b)?;
        let bxt = b.matmul(&self.x.transpose())?;
        Ok(xb.add(&bxt)?.into_vec())
    }

    /// Entrywise `I ⊗ X + X ⊗ I`.
    pub fn dense(&self) -> DenseMatrix {
        let m = self.order();
        let x = &self.x;
        DenseMatrix::from_fn(m * m, m * m, |r, c| {
            let (i1, i0) = (r / m, r % m);
            let (j1, j0) = (c / m, c % m);
            let mut v = 0.0;
            if i1 == j1 {
                v += x[(i0, j0)];
            }
            if i0 == j0 {
                v += x[(i1, j1)];
            }
            v
        })
    }

    /// Spectral norm of the dense operator.
    pub fn norm2(&self) -> Result<f64> {
        spectral_norm(&self.dense())
    }
}

pub fn kron_sum_apply(x: &DenseMatrix, v: &[f64]) -> Result<Vec<f64>> {
    KronSumOp::new(x.clone())?.apply(v)
}

pub fn kron_sum_dense(x: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(KronSumOp::new(x.clone())?.dense())
}

/// `XBᵀ + BXᵀ`.
pub fn sym_product(x: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let xbt = x.matmul(&b.transpose()).expect("equal orders");
    let t = xbt.transpose();
    xbt.add(&t).expect("equal orders")
}

/// Lower triangle with the diagonal halved.
fn phi(x: &DenseMatrix) -> DenseMatrix {
    let m = x.rows();
    DenseMatrix::from_fn(m, m, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => x[(i, j)],
        std::cmp::Ordering::Equal => 0.5 * x[(i, j)],
        std::cmp::Ordering::Less => 0.0,
    })
}

/// The Cholesky map and its derivatives at a fixed SPD matrix.
#[derive(Debug, Clone)]
pub struct CholeskyMap {
    l: DenseMatrix,
    linv: DenseMatrix,
}

impl CholeskyMap {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        check_order(a.rows())?;
        let f = cholesky(a)?;
        Ok(Self::from_factor(f.into_matrix()))
    }

    pub fn shifted(a: &DenseMatrix, lambda: f64) -> Result<Self> {
        check_order(a.rows())?;
        let f = cholesky_shifted(a, lambda)?;
        Ok(Self::from_factor(f.into_matrix()))
    }

    fn from_factor(l: DenseMatrix) -> Self {
        let m = l.rows();
        let mut linv = DenseMatrix::identity(m);
        for j in 0..m {
            forward_substitute(&l, linv.col_mut(j));
        }
        CholeskyMap { l, linv }
    }

    pub fn order(&self) -> usize {
        self.l.rows()
    }

    pub fn factor(&self) -> &DenseMatrix {
        &self.l
    }

    /// `N_L(Γ) = ΓLᵀ + LΓᵀ`.
    pub fn n_apply(&self, gamma: &DenseMatrix) -> DenseMatrix {
        sym_product(&self.l, gamma)
    }

    /// Lower-triangular `Γ` with `ΓLᵀ + LΓᵀ = Δ` for symmetric `Δ`.
    pub fn n_inv(&self, delta: &DenseMatrix) -> DenseMatrix {
        let w = self
            .linv
            .matmul(delta)
            .and_then(|t| t.matmul(&self.linv.transpose()))
            .expect("equal orders");
        self.l.matmul(&phi(&w)).expect("equal orders")
    }

    fn check_direction(&self, delta: &DenseMatrix) -> Result<()> {
        let m = self.order();
        if delta.rows() != m || delta.cols() != m {
            return Err(Error::DimensionMismatch(format!(
                "direction is {}x{}, expected {m}x{m}",
                delta.rows(),
                delta.cols()
            )));
        }
        let scale = delta.frobenius_norm().max(1.0);
        if delta.max_asymmetry() > 1e-12 * scale {
            return Err(Error::NotSymmetric {
                asymmetry: delta.max_asymmetry(),
            });
        }
        Ok(())
    }

    /// First derivative along `δ`.
    pub fn d1(&self, delta: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_direction(delta)?;
        Ok(self.n_inv(delta))
    }

    /// Second derivative along `(δ₁, δ₂)`: `−N⁻¹ S_{Γ₁}(Γ₂)`, `Γᵢ = N⁻¹δᵢ`.
    pub fn d2(&self, d1: &DenseMatrix, d2: &DenseMatrix) -> Result<DenseMatrix> {
        let g1 = self.d1(d1)?;
        let g2 = self.d1(d2)?;
        Ok(self.n_inv(&sym_product(&g1, &g2)).scale(-1.0))
    }

    /// Third derivative along `(δ₁, δ₂, δ₃)`.
    pub fn d3(&self, d1: &DenseMatrix, d2: &DenseMatrix, d3: &DenseMatrix) -> Result<DenseMatrix> {
        let g1 = self.d1(d1)?;
        let g2 = self.d1(d2)?;
        let g3 = self.d1(d3)?;
        // Second derivatives along (δ₁, δᵢ) and (δ₂, δ₃).
        let g12 = self.n_inv(&sym_product(&g1, &g2)).scale(-1.0);
        let g13 = self.n_inv(&sym_product(&g1, &g3)).scale(-1.0);
        let g23 = self.n_inv(&sym_product(&g2, &g3)).scale(-1.0);
        let sum = sym_product(&g1, &g23)
            .add(&sym_product(&g3, &g12))?
            .add(&sym_product(&g2, &g13))?;
        Ok(self.n_inv(&sum).scale(-1.0))
    }

    /// Dense matrix of `N⁻¹` from symmetric to lower-triangular coordinates.
    fn n_inv_matrix(&self) -> DenseMatrix {
        let m = self.order();
        let d = tri(m);
        let cols: Vec<Vec<f64>> = (0..d)
            .into_par_iter()
            .map(|k| lower_coords(&self.n_inv(&sym_basis(m, k))))
            .collect();
        DenseMatrix::from_fn(d, d, |i, j| cols[j][i])
    }
}

fn tri(m: usize) -> usize {
    m * (m + 1) / 2
}

/// `(p, q)` with `p >= q`, enumerated column by column.
fn lower_index(m: usize, k: usize) -> (usize, usize) {
    let mut k = k;
    for q in 0..m {
        let len = m - q;
        if k < len {
            return (q + k, q);
        }
        k -= len;
    }
    panic!("lower-triangular index out of range")
}

fn lower_coords(x: &DenseMatrix) -> Vec<f64> {
    let m = x.rows();
    let mut out = Vec::with_capacity(tri(m));
    for q in 0..m {
        for p in q..m {
            out.push(x[(p, q)]);
        }
    }
    out
}

fn sym_coords(x: &DenseMatrix) -> Vec<f64> {
    let m = x.rows();
    let mut out = Vec::with_capacity(tri(m));
    for q in 0..m {
        for p in q..m {
            let v = if p == q {
                x[(p, q)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (x[(p, q)] + x[(q, p)])
            };
            out.push(v);
        }
    }
    out
}

fn lower_basis(m: usize, k: usize) -> DenseMatrix {
    let (p, q) = lower_index(m, k);
    let mut e = DenseMatrix::zeros(m, m);
    e[(p, q)] = 1.0;
    e
}

fn sym_basis(m: usize, k: usize) -> DenseMatrix {
    let (p, q) = lower_index(m, k);
    let mut e = DenseMatrix::zeros(m, m);
    if p == q {
        e[(p, p)] = 1.0;
    } else {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        e[(p, q)] = s;
        e[(q, p)] = s;
    }
    e
}

/// Dense matrix of `S_X` from lower-triangular to symmetric coordinates.
fn s_matrix(x: &DenseMatrix) -> DenseMatrix {
    let m = x.rows();
    let d = tri(m);
    let cols: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|k| sym_coords(&sym_product(x, &lower_basis(m, k))))
        .collect();
    DenseMatrix::from_fn(d, d, |i, j| cols[j][i])
}

/// Largest singular value; SVD for small operators, power iteration on
/// `AᵀA` otherwise.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if a.rows().min(a.cols()) <= tri(SVD_NORM_LIMIT) {
        return Ok(svd(a)?.sigma.first().copied().unwrap_or(0.0));
    }
    power_norm(a)
}

fn power_norm(a: &DenseMatrix) -> Result<f64> {
    let n = a.cols();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.618).sin() * 0.5).collect();
    let mut est = 0.0;
    for _ in 0..2000 {
        let nv = crate::linalg::norm2(&v);
        if nv == 0.0 {
            return Ok(0.0);
        }
        for x in &mut v {
            *x /= nv;
        }
        let av = a.matvec(&v)?;
        let w = a.t_matvec(&av)?;
        let next = crate::linalg::norm2(&av);
        v = w;
        if (next - est).abs() <= 1e-13 * next {
            return Ok(next);
        }
        est = next;
    }
    Ok(est)
}

/// Second-order Taylor expansion of `λ ↦ chol(A + λI)` about `λ_c`.
#[derive(Debug, Clone)]
pub struct TaylorModel {
    pub lambda_c: f64,
    pub l_c: DenseMatrix,
    /// First derivative `N⁻¹ I`.
    pub first: DenseMatrix,
    /// Second derivative `−N⁻¹ S_{Γ₁}(Γ₁)`.
    pub second: DenseMatrix,
}

impl TaylorModel {
    pub fn new(a: &DenseMatrix, lambda_c: f64) -> Result<Self> {
        let map = CholeskyMap::shifted(a, lambda_c)?;
        let id = DenseMatrix::identity(a.rows());
        let first = map.n_inv(&id);
        let second = map.n_inv(&sym_product(&first, &first)).scale(-1.0);
        Ok(TaylorModel {
            lambda_c,
            l_c: map.l,
            first,
            second,
        })
    }

    /// `L_c + tΓ₁ + ½t²Γ₁₁` with `t = λ − λ_c`.
    pub fn eval(&self, lambda: f64) -> CholeskyFactor {
        let t = lambda - self.lambda_c;
        let m = if t == 0.0 {
            self.l_c.clone()
        } else {
            self.l_c
                .add(&self.first.scale(t))
                .and_then(|s| s.add(&self.second.scale(0.5 * t * t)))
                .expect("equal orders")
        };
        CholeskyFactor::from_lower(m, FactorSource::Interpolated { lambda })
            .expect("square factor")
    }
}

pub fn taylor_eval(a: &DenseMatrix, lambda_c: f64, lambda: f64) -> Result<CholeskyFactor> {
    Ok(TaylorModel::new(a, lambda_c)?.eval(lambda))
}

/// The remainder functional at one shift `s`:
/// `‖N⁻¹E‖²‖N⁻¹I‖ + ‖N⁻¹‖‖N⁻¹E‖‖N⁻¹I‖²`, with `N = N_{chol(A+sI)}` and
/// `E = S_{N⁻¹I}`.
pub fn remainder_at(a: &DenseMatrix, s: f64) -> Result<f64> {
    let map = CholeskyMap::shifted(a, s)?;
    let ninv = map.n_inv_matrix();
    let g1 = map.n_inv(&DenseMatrix::identity(a.rows()));
    let ninv_e = ninv.matmul(&s_matrix(&g1))?;
    let a1 = spectral_norm(&ninv_e)?;
    let b = spectral_norm(&ninv)?;
    let c = g1.frobenius_norm();
    Ok(a1 * a1 * c + b * a1 * c * c)
}

/// Maximum of [`remainder_at`] over `grid_n` log-spaced shifts in `[a, b]`.
/// This is a lower estimate of the supremum over the interval.
pub fn remainder_r(a: &DenseMatrix, lo: f64, hi: f64, grid_n: usize) -> Result<f64> {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    if grid_n < 2 {
        return Err(Error::InvalidGrid("remainder grid needs at least 2 points".into()));
    }
    if lo.is_nan() || lo <= 0.0 {
        return Err(Error::InvalidLambda(lo));
    }
    let vals: Vec<Result<f64>> = (0..grid_n)
        .into_par_iter()
        .map(|i| {
            let s = lo * (hi / lo).powf(i as f64 / (grid_n - 1) as f64);
            remainder_at(a, s)
        })
        .collect();
    let mut best: f64 = 0.0;
    for v in vals {
        best = best.max(v?);
    }
    Ok(best)
}

/// Parameters of one interpolation-bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConfig {
    pub lambda_c: f64,
    /// Half-width of the evaluated interval.
    pub gamma: f64,
    /// Half-width of the sampled interval.
    pub w: f64,
    pub samples: usize,
    pub degree: usize,
    pub r_grid: usize,
    pub sweep: usize,
}

impl BoundConfig {
    pub fn new(lambda_c: f64, gamma: f64, w: f64) -> Self {
        BoundConfig {
            lambda_c,
            gamma,
            w,
            samples: 4,
            degree: 2,
            r_grid: DEFAULT_R_GRID,
            sweep: DEFAULT_SWEEP,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda_c > self.gamma && self.gamma >= self.w && self.w > 0.0) {
            return Err(Error::HypothesisViolated(format!(
                "need lambda_c > gamma >= w > 0, got lambda_c = {}, gamma = {}, w = {}",
                self.lambda_c, self.gamma, self.w
            )));
        }
        if self.samples <= self.degree {
            return Err(Error::InsufficientSamples {
                samples: self.samples,
                degree: self.degree,
            });
        }
        if self.sweep == 0 {
            return Err(Error::InvalidGrid("empty sweep".into()));
        }
        Ok(())
    }

    /// Evenly spaced samples over `[λ_c − w, λ_c + w]`.
    pub fn sample_lambdas(&self) -> Vec<f64> {
        spread(self.lambda_c - self.w, self.lambda_c + self.w, self.samples)
    }

    /// Evenly spaced evaluation points over `[λ_c − γ, λ_c + γ]`.
    pub fn sweep_lambdas(&self) -> Vec<f64> {
        spread(self.lambda_c - self.gamma, self.lambda_c + self.gamma, self.sweep)
    }
}

fn spread(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// One swept λ of a bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub lambda: f64,
    pub gamma: f64,
    pub w: f64,
    pub g: usize,
    /// Number of lower-triangular entries.
    pub d: usize,
    pub norm_v_dagger: f64,
    pub r_interval: f64,
    /// `‖chol(A + λI) − p(λ)‖_F / √D`.
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// `lhs / rhs > 0.9`.
    pub near_limit: bool,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str =
        "lambda,gamma,w,g,D,norm_v_dagger,r_interval,lhs,rhs,satisfied,near_limit";

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{:e},{:e},{},{},{:e},{:e},{:e},{:e},{},{}",
            self.lambda,
            self.gamma,
            self.w,
            self.g,
            self.d,
            self.norm_v_dagger,
            self.r_interval,
            self.lhs,
            self.rhs,
            self.satisfied,
            self.near_limit
        )
    }
}

/// `‖V†‖₂ = 1 / σ_min(V)` for the raw monomial observation matrix.
pub fn vandermonde_pinv_norm(lambdas: &[f64], degree: usize) -> Result<f64> {
    let v = DenseMatrix::from_fn(lambdas.len(), degree + 1, |s, k| lambdas[s].powi(k as i32));
    let f = svd(&v)?;
    let min = f.sigma.last().copied().unwrap_or(0.0);
    Ok(if min > 0.0 { 1.0 / min } else { f64::INFINITY })
}

/// Fits interpolated factors from samples in `[λ_c − w, λ_c + w]` and
/// compares their error over `[λ_c − γ, λ_c + γ]` against
/// `[γ³ + √g w³ (1 + γ²)(λ_c + 1)‖V†‖₂] R / √D`.
pub fn check_main_bound(a: &DenseMatrix, cfg: &BoundConfig) -> Result<Vec<BoundReport>> {
    cfg.validate()?;
    let m = a.rows();
    check_order(m)?;
    let samples = cfg.sample_lambdas();
    let layout = VecLayout::row_wise(m);
    let model = fit_with(a, &samples, cfg.degree, &layout, Basis::RawMonomial)?;
    let norm_v_dagger = vandermonde_pinv_norm(&samples, cfg.degree)?;
    let r = remainder_r(
        a,
        cfg.lambda_c - cfg.gamma,
        cfg.lambda_c + cfg.gamma,
        cfg.r_grid,
    )?;
    let d = tri(m);
    let sqrt_d = (d as f64).sqrt();
    let (gam, w) = (cfg.gamma, cfg.w);
    let rhs = (gam.powi(3)
        + (cfg.samples as f64).sqrt()
            * w.powi(3)
            * (1.0 + gam * gam)
            * (cfg.lambda_c + 1.0)
            * norm_v_dagger)
        * r
        / sqrt_d;
    cfg.sweep_lambdas()
        .into_iter()
        .map(|l| {
            let exact = cholesky_shifted(a, l)?;
            let approx = model.eval(l);
            let lhs = exact.matrix().sub(approx.matrix())?.frobenius_norm() / sqrt_d;
            Ok(BoundReport {
                lambda: l,
                gamma: gam,
                w,
                g: cfg.samples,
                d,
                norm_v_dagger,
                r_interval: r,
                lhs,
                rhs,
                satisfied: lhs <= rhs * (1.0 + 1e-9),
                near_limit: lhs > 0.9 * rhs,
            })
        })
        .collect()
}

/// Random SPD matrix `BᵀB / m + shift·I` with Gaussian `B`.
pub fn random_spd(m: usize, shift: f64, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = DenseMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
    b.gram().scale(1.0 / m as f64).add_diagonal(shift)
}

/// Random symmetric matrix with standard normal entries.
pub fn random_symmetric(m: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DenseMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
    g.add(&g.transpose()).expect("square").scale(0.5)
}

/// The 3×3 matrix `[[1, λ_c, 0], [0, 1, λ_c], [0, 0, 1]]` relating the
/// centred and raw quadratic bases.
pub fn basis_change_inverse(lambda_c: f64) -> DenseMatrix {
    DenseMatrix::from_rows(&[&[1.0, lambda_c, 0.0], &[0.0, 1.0, lambda_c], &[0.0, 0.0, 1.0]])
        .expect("3x3")
}

/// `‖(1, t, t²)‖₂` for the centred quadratic basis at distance `t`.
pub fn tau_norm(t: f64) -> f64 {
    (1.0 + t * t + t.powi(4)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chol(a: &DenseMatrix) -> DenseMatrix {
        cholesky(a).unwrap().into_matrix()
    }

    fn max_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn kron_sum_small() {
        let k = kron_sum_dense(&DenseMatrix::from_diag(&[3.0])).unwrap();
        assert_eq!(k.as_slice(), &[6.0]);
        let k = kron_sum_dense(&DenseMatrix::identity(2)).unwrap();
        assert_eq!(k, DenseMatrix::identity(4).scale(2.0));
    }

    #[test]
    fn kron_sum_apply_matches_dense() {
        let x = random_symmetric(3, 1).add(&DenseMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64)).unwrap();
        let op = KronSumOp::new(x).unwrap();
        let d = op.dense();
        for seed in 0..5 {
            let v = random_symmetric(3, 10 + seed).add(&DenseMatrix::from_fn(3, 3, |i, _| i as f64)).unwrap();
            let a = op.apply(v.as_slice()).unwrap();
            let b = d.matvec(v.as_slice()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(op.apply(&[1.0; 4]).is_err());
    }

    #[test]
    fn literal_kron_sum_is_not_the_cholesky_derivative() {
        // M vec(Γ) = vec(LΓ + ΓLᵀ) differs from ΓLᵀ + LΓᵀ on triangular Γ,
        // so solving with M gives a different matrix than the derivative.
        let a = random_spd(4, 0.5, 3);
        let delta = random_symmetric(4, 4);
        let map = CholeskyMap::new(&a).unwrap();
        let good = map.d1(&delta).unwrap();
        let m = kron_sum_dense(map.factor()).unwrap();
        let via_m = m.matvec(good.as_slice()).unwrap();
        assert!(via_m
            .iter()
            .zip(delta.as_slice())
            .any(|(x, y)| (x - y).abs() > 1e-3));
    }

    #[test]
    fn first_derivative_small_cases() {
        let a = DenseMatrix::from_diag(&[4.0]);
        let g = CholeskyMap::new(&a).unwrap().d1(&DenseMatrix::from_diag(&[1.0])).unwrap();
        assert!((g[(0, 0)] - 0.25).abs() < 1e-15);
        let i3 = DenseMatrix::identity(3);
        let g = CholeskyMap::new(&i3).unwrap().d1(&i3).unwrap();
        assert!(max_diff(&g, &i3.scale(0.5)) < 1e-15);
        let map = CholeskyMap::new(&i3).unwrap();
        let skew = DenseMatrix::from_fn(3, 3, |i, j| i as f64 - j as f64);
        assert!(matches!(map.d1(&skew), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn first_derivative_defining_equation_and_fd() {
        for seed in 0..20 {
            let m = 1 + (seed as usize % 8);
            let a = random_spd(m, 1.0, seed);
            let delta = random_symmetric(m, seed + 100);
            let map = CholeskyMap::new(&a).unwrap();
            let g = map.d1(&delta).unwrap();
            // Lower triangular and satisfies ΓLᵀ + LΓᵀ = Δ.
            for j in 1..m {
                for i in 0..j {
                    assert_eq!(g[(i, j)], 0.0);
                }
            }
            assert!(max_diff(&map.n_apply(&g), &delta) <= 1e-10);
            let eps = 1e-6;
            let fd = chol(&a.add(&delta.scale(eps)).unwrap())
                .sub(&chol(&a))
                .unwrap()
                .scale(1.0 / eps);
            assert!(max_diff(&fd, &g) <= 1e-5, "seed {seed}");
        }
    }

    #[test]
    fn scalar_derivatives() {
        for a0 in [0.5, 2.0, 9.0] {
            let a = DenseMatrix::from_diag(&[a0]);
            let one = DenseMatrix::from_diag(&[1.0]);
            let map = CholeskyMap::new(&a).unwrap();
            let d1 = map.d1(&one).unwrap()[(0, 0)];
            let d2 = map.d2(&one, &one).unwrap()[(0, 0)];
            let d3 = map.d3(&one, &one, &one).unwrap()[(0, 0)];
            assert!((d1 - 0.5 / a0.sqrt()).abs() < 1e-14);
            assert!((d2 + 0.25 * a0.powf(-1.5)).abs() < 1e-14);
            assert!((d3 - 0.375 * a0.powf(-2.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn third_derivative_matches_finite_differences() {
        let eps = 1e-4;
        for seed in 0..6 {
            let m = 2 + seed as usize % 4;
            let a = random_spd(m, 1.0, seed);
            let (d1, d2, d3) = (
                random_symmetric(m, seed + 1),
                random_symmetric(m, seed + 2),
                random_symmetric(m, seed + 3),
            );
            let exact = CholeskyMap::new(&a).unwrap().d3(&d1, &d2, &d3).unwrap();
            let first = |s1: f64, s2: f64| {
                let shifted = a
                    .add(&d1.scale(s1 * eps))
                    .unwrap()
                    .add(&d2.scale(s2 * eps))
                    .unwrap();
                CholeskyMap::new(&shifted).unwrap().d1(&d3).unwrap()
            };
            let fd = first(1.0, 1.0)
                .sub(&first(1.0, -1.0))
                .unwrap()
                .sub(&first(-1.0, 1.0))
                .unwrap()
                .add(&first(-1.0, -1.0))
                .unwrap()
                .scale(1.0 / (4.0 * eps * eps));
            let rel = fd.sub(&exact).unwrap().frobenius_norm() / exact.frobenius_norm();
            assert!(rel <= 1e-3, "seed {seed}: {rel}");
        }
    }

    #[test]
    fn taylor_small_cases() {
        let a = random_spd(5, 0.5, 9);
        let t = TaylorModel::new(&a, 0.7).unwrap();
        let at_c = t.eval(0.7);
        assert_eq!(at_c.matrix(), cholesky_shifted(&a, 0.7).unwrap().matrix());
        let a0: f64 = 2.0;
        let s = TaylorModel::new(&DenseMatrix::from_diag(&[a0]), 1.0).unwrap();
        let x = 0.3;
        let ell: f64 = (a0 + 1.0f64).sqrt();
        let expect = ell + x / (2.0 * ell) - x * x / (8.0 * ell.powi(3));
        assert!((s.eval(1.0 + x).matrix()[(0, 0)] - expect).abs() < 1e-14);
    }

    #[test]
    fn taylor_error_is_cubic() {
        let a = random_spd(6, 0.5, 17);
        let lc = 1.0;
        let t = TaylorModel::new(&a, lc).unwrap();
        let pts: Vec<(f64, f64)> = (0..9)
            .map(|i| {
                let h = 1e-2 * 10f64.powf(i as f64 / 4.0);
                let err = t
                    .eval(lc + h)
                    .matrix()
                    .sub(cholesky_shifted(&a, lc + h).unwrap().matrix())
                    .unwrap()
                    .frobenius_norm();
                (h.ln(), err.ln())
            })
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((2.7..=3.3).contains(&slope), "{slope}");
    }

    #[test]
    fn remainder_scalar_closed_form() {
        let a0: f64 = 1.5;
        for s in [0.1, 1.0, 4.0] {
            let ell = (a0 + s).sqrt();
            let r = remainder_at(&DenseMatrix::from_diag(&[a0]), s).unwrap();
            assert!((r - 3.0 / (16.0 * ell.powi(5))).abs() < 1e-14);
        }
        // Decreasing in s, so the interval maximum sits at the left end.
        let r = remainder_r(&DenseMatrix::from_diag(&[a0]), 0.5, 2.0, 5).unwrap();
        assert!((r - 3.0 / (16.0 * 2.0f64.sqrt().powi(5))).abs() < 1e-14);
    }

    #[test]
    fn remainder_grid_monotone_and_refinement() {
        let a = random_spd(2, 0.1, 5);
        let wide = remainder_r(&a, 0.1, 1.0, 33).unwrap();
        let inner = remainder_r(&a, 0.2, 0.5, 33).unwrap();
        assert!(wide >= inner);
        let fine = remainder_r(&a, 0.1, 1.0, 64).unwrap();
        assert!((wide - fine).abs() <= 0.05 * fine);
    }

    #[test]
    fn reduced_norms_match_dense_kron_norm_on_symmetric_input() {
        // ‖S_X‖ restricted to lower-triangular inputs never exceeds 2‖X‖_F.
        for seed in 0..10 {
            let x = random_symmetric(4, seed);
            let s = spectral_norm(&s_matrix(&x)).unwrap();
            assert!(s <= 2.0 * x.frobenius_norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn power_iteration_agrees_with_svd() {
        let x = random_symmetric(9, 3);
        let a = s_matrix(&x);
        let p = power_norm(&a).unwrap();
        let s = svd(&a).unwrap().sigma[0];
        assert!((p - s).abs() <= 1e-8 * s);
    }

    #[test]
    fn bound_hypothesis_checked() {
        let a = random_spd(3, 0.5, 1);
        for (lc, g, w) in [(1.0, 1.0, 0.5), (1.0, 0.5, 0.6), (1.0, 0.5, 0.0)] {
            assert!(matches!(
                check_main_bound(&a, &BoundConfig::new(lc, g, w)),
                Err(Error::HypothesisViolated(_))
            ));
        }
    }

    #[test]
    fn bound_holds_on_random_instances() {
        for seed in 0..10 {
            let m = 1 + seed as usize % 8;
            let a = random_spd(m, 0.2, seed);
            let reports = check_main_bound(&a, &BoundConfig::new(1.0, 0.5, 0.25)).unwrap();
            assert_eq!(reports.len(), DEFAULT_SWEEP);
            for r in reports {
                assert!(r.satisfied, "seed {seed}: {r:?}");
                assert!(r.rhs > 0.0);
            }
        }
    }

    #[test]
    fn bound_at_sample_points_only() {
        let a = random_spd(4, 0.3, 2);
        let mut cfg = BoundConfig::new(1.0, 0.4, 0.4);
        cfg.sweep = cfg.samples;
        let reports = check_main_bound(&a, &cfg).unwrap();
        for (r, l) in reports.iter().zip(cfg.sample_lambdas()) {
            assert!((r.lambda - l).abs() < 1e-15);
            assert!(r.lhs < 1e-3 && r.rhs > 0.0);
        }
    }

    #[test]
    fn bound_scalar_closed_form() {
        let a = DenseMatrix::from_diag(&[0.5]);
        let cfg = BoundConfig::new(1.0, 0.5, 0.5);
        let reports = check_main_bound(&a, &cfg).unwrap();
        let r_expected = 3.0 / (16.0 * (0.5f64 + 0.5).sqrt().powi(5));
        assert!((reports[0].r_interval - r_expected).abs() < 1e-14);
        let nv = vandermonde_pinv_norm(&cfg.sample_lambdas(), 2).unwrap();
        let rhs = (0.125 + 2.0 * 0.125 * 1.25 * 2.0 * nv) * r_expected;
        assert!((reports[0].rhs - rhs).abs() < 1e-12 * rhs);
        assert!(reports.iter().all(|r| r.satisfied));
    }

    #[test]
    fn order_limit() {
        let a = DenseMatrix::identity(MAX_ORDER + 1);
        assert!(matches!(CholeskyMap::new(&a), Err(Error::OrderTooLarge { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn vec_is_an_isometry(m in 1usize..7, seed in any::<u64>()) {
            let x = random_symmetric(m, seed).add(&DenseMatrix::from_fn(m, m, |i, j| (i as f64) - 0.3 * j as f64)).unwrap();
            let v = crate::linalg::norm2(x.as_slice());
            prop_assert!((v - x.frobenius_norm()).abs() <= 1e-15 * v.max(1.0));
        }

        #[test]
        fn kron_sum_norm_bound(m in 1usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..m * m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = KronSumOp::from_vec(&v).unwrap().norm2().unwrap();
            prop_assert!(n <= 2.0 * crate::linalg::norm2(&v) * (1.0 + 1e-12));
        }

        #[test]
        fn basis_change_norm_bound(lc in 0.0f64..100.0) {
            let n = spectral_norm(&basis_change_inverse(lc)).unwrap();
            prop_assert!(n <= (lc + 1.0) * (1.0 + 1e-12));
        }

        #[test]
        fn tau_norm_bound(t in -10.0f64..10.0) {
            prop_assert!(tau_norm(t) <= 1.0 + t * t);
        }

        #[test]
        fn second_derivative_is_symmetric(m in 1usize..6, seed in any::<u64>()) {
            let a = random_spd(m, 0.5, seed);
            let d1 = random_symmetric(m, seed ^ 1);
            let d2 = random_symmetric(m, seed ^ 2);
            let map = CholeskyMap::new(&a).unwrap();
            let x = map.d2(&d1, &d2).unwrap();
            let y = map.d2(&d2, &d1).unwrap();
            prop_assert!(x.sub(&y).unwrap().max_abs() <= 1e-10 * x.max_abs().max(1.0));
        }
    }
}
