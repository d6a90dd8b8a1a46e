//! Polynomial interpolation of Cholesky factors along the ridge path.
//!
//! Given exact factors `L_s = chol(H + λ_s I)` at `g` sample values, every
//! lower-triangular entry is fitted by a degree-`r` least-squares polynomial
//! in λ. Evaluating the `D = h(h+1)/2` polynomials at a new λ costs `D·r`
//! multiply-adds instead of an `O(h³)` factorization.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, cholesky_shifted, svd, CholeskyFactor, DenseMatrix, FactorSource,
};
use crate::trivec::{TargetMatrix, VecLayout};

/// Default number of exact factorizations.
pub const DEFAULT_SAMPLES: usize = 4;
/// Default polynomial degree.
pub const DEFAULT_DEGREE: usize = 2;
/// Above this condition number the monomial basis is rescaled to `[-1, 1]`.
pub const COND_RESCALE_THRESHOLD: f64 = 1e8;

/// Polynomial variable used for the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Basis {
    /// Raw monomials, switching to the rescaled variable when the
    /// observation matrix is ill-conditioned.
    #[default]
    Auto,
    /// Always raw monomials in λ.
    RawMonomial,
}

/// Affine change of variable `t = (λ - center) / half_width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub center: f64,
    pub half_width: f64,
}

impl AffineMap {
    #[inline]
    pub fn apply(&self, lambda: f64) -> f64 {
        (lambda - self.center) / self.half_width
    }
}

/// Least-squares projector for degree-`r` polynomials through fixed abscissae.
///
/// `coeffs = P · values`, with `P = (VᵀV)⁻¹Vᵀ` of shape `(r+1) × g`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFit {
    degree: usize,
    xs: Vec<f64>,
    map: Option<AffineMap>,
    projector: DenseMatrix,
    cond_v: f64,
    cond_v_raw: f64,
}

impl PolyFit {
    pub fn new(xs: &[f64], degree: usize, basis: Basis) -> Result<Self> {
        let g = xs.len();
        if g <= degree {
            return Err(Error::InsufficientSamples { samples: g, degree });
        }
        for (i, &x) in xs.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::DegenerateSamples(x));
            }
            if xs[..i].contains(&x) {
                return Err(Error::DegenerateSamples(x));
            }
        }
        let raw = vandermonde(xs, degree, None);
        let cond_v_raw = condition_number(&raw)?;
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rescale = basis == Basis::Auto && cond_v_raw > COND_RESCALE_THRESHOLD && hi > lo;
        let (v, map, cond_v) = if rescale {
            let map = AffineMap {
                center: 0.5 * (lo + hi),
                half_width: 0.5 * (hi - lo),
            };
            let v = vandermonde(xs, degree, Some(map));
            let c = condition_number(&v)?;
            (v, Some(map), c)
        } else {
            (raw, None, cond_v_raw)
        };
        let gram = v.gram();
        let chol = cholesky(&gram)?;
        let mut projector = DenseMatrix::zeros(degree + 1, g);
        for s in 0..g {
            let col = chol.solve(&v.row(s))?;
            projector.col_mut(s).copy_from_slice(&col);
        }
        Ok(PolyFit {
            degree,
            xs: xs.to_vec(),
            map,
            projector,
            cond_v,
            cond_v_raw,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.xs
    }

    pub fn map(&self) -> Option<AffineMap> {
        self.map
    }

    /// Condition number of the observation matrix actually used.
    pub fn cond_v(&self) -> f64 {
        self.cond_v
    }

    /// Condition number of the raw monomial observation matrix.
    pub fn cond_v_raw(&self) -> f64 {
        self.cond_v_raw
    }

    pub fn projector(&self) -> &DenseMatrix {
        &self.projector
    }

    /// Polynomial variable for `lambda`.
    #[inline]
    pub fn variable(&self, lambda: f64) -> f64 {
        match self.map {
            Some(m) => m.apply(lambda),
            None => lambda,
        }
    }

    /// Coefficients (lowest degree first) of the fit to one value per sample.
    pub fn fit_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.xs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} samples",
                values.len(),
                self.xs.len()
            )));
        }
        self.projector.matvec(values)
    }

    /// Evaluates a polynomial with coefficients from [`Self::fit_values`].
    pub fn eval(&self, coeffs: &[f64], lambda: f64) -> f64 {
        let t = self.variable(lambda);
        coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }
}

fn vandermonde(xs: &[f64], degree: usize, map: Option<AffineMap>) -> DenseMatrix {
    DenseMatrix::from_fn(xs.len(), degree + 1, |s, k| {
        let x = map.map_or(xs[s], |m| m.apply(xs[s]));
        x.powi(k as i32)
    })
}

fn condition_number(v: &DenseMatrix) -> Result<f64> {
    let f = svd(v)?;
    let max = f.sigma.first().copied().unwrap_or(0.0);
    let min = f.sigma.last().copied().unwrap_or(0.0);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

/// Fitted per-entry polynomials.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpModel {
    poly: PolyFit,
    layout: VecLayout,
    /// `coeffs[k][j]`: coefficient of degree `k` for vector entry `j`.
    coeffs: Vec<Vec<f64>>,
    residual_fro: f64,
    target_fro: f64,
}

/// Factorizes `H + λ_s I` for every sample and fits the entry polynomials.
pub fn fit(
    h: &DenseMatrix,
    sample_lambdas: &[f64],
    degree: usize,
    layout: &VecLayout,
) -> Result<InterpModel> {
    fit_with(h, sample_lambdas, degree, layout, Basis::Auto)
}

pub fn fit_with(
    h: &DenseMatrix,
    sample_lambdas: &[f64],
    degree: usize,
    layout: &VecLayout,
    basis: Basis,
) -> Result<InterpModel> {
    validate_samples(sample_lambdas, degree)?;
    let factors = exact_factors(h, sample_lambdas)?;
    let target = layout.bulk_gather(&factors)?;
    fit_target(&target, sample_lambdas, degree, layout, basis)
}

/// Exact factors `chol(H + λ_s I)`, one per sample.
pub fn exact_factors(h: &DenseMatrix, lambdas: &[f64]) -> Result<Vec<CholeskyFactor>> {
    lambdas
        .par_iter()
        .map(|&l| cholesky_shifted(h, l))
        .collect()
}

fn validate_samples(lambdas: &[f64], degree: usize) -> Result<()> {
    if lambdas.len() <= degree {
        return Err(Error::InsufficientSamples {
            samples: lambdas.len(),
            degree,
        });
    }
    for (i, &l) in lambdas.iter().enumerate() {
        if !(l > 0.0 && l.is_finite()) || lambdas[..i].contains(&l) {
            return Err(Error::DegenerateSamples(l));
        }
    }
    Ok(())
}

/// Fits the entry polynomials to an already gathered target matrix whose
/// row `s` is the vectorized factor at `sample_lambdas[s]`.
pub fn fit_target(
    target: &TargetMatrix,
    sample_lambdas: &[f64],
    degree: usize,
    layout: &VecLayout,
    basis: Basis,
) -> Result<InterpModel> {
    validate_samples(sample_lambdas, degree)?;
    if target.rows() != sample_lambdas.len() || target.cols() != layout.len() {
        return Err(Error::DimensionMismatch(format!(
            "target is {}x{}, expected {}x{}",
            target.rows(),
            target.cols(),
            sample_lambdas.len(),
            layout.len()
        )));
    }
    let poly = PolyFit::new(sample_lambdas, degree, basis)?;
    let d = layout.len();
    let g = sample_lambdas.len();
    let p = poly.projector();
    let mut coeffs = vec![vec![0.0; d]; degree + 1];
    for (k, row) in coeffs.iter_mut().enumerate() {
        row.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(c, out)| {
                let start = c * CHUNK;
                for s in 0..g {
                    let w = p[(k, s)];
                    let t = &target.row(s)[start..start + out.len()];
                    for (o, &x) in out.iter_mut().zip(t) {
                        *o += w * x;
                    }
                }
            });
    }

    let mut residual_sq = 0.0;
    for (s, &l) in sample_lambdas.iter().enumerate().take(g) {
        let t = poly.variable(l);
        let row = target.row(s);
        for (j, &x) in row.iter().enumerate() {
            let mut acc = coeffs[degree][j];
            for c in coeffs[..degree].iter().rev() {
                acc = acc * t + c[j];
            }
            residual_sq += (x - acc) * (x - acc);
        }
    }
    Ok(InterpModel {
        poly,
        layout: layout.clone(),
        coeffs,
        residual_fro: residual_sq.sqrt(),
        target_fro: target.frobenius_norm(),
    })
}

const CHUNK: usize = 4096;

impl InterpModel {
    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    pub fn sample_lambdas(&self) -> &[f64] {
        self.poly.abscissae()
    }

    pub fn layout(&self) -> &VecLayout {
        &self.layout
    }

    pub fn basis_map(&self) -> Option<AffineMap> {
        self.poly.map()
    }

    pub fn cond_v(&self) -> f64 {
        self.poly.cond_v()
    }

    /// `‖T − VΘ‖_F` over the sampled factors.
    pub fn residual_fro(&self) -> f64 {
        self.residual_fro
    }

    /// `‖T‖_F`.
    pub fn target_fro(&self) -> f64 {
        self.target_fro
    }

    /// Coefficients of degree `k` for every vector entry.
    pub fn coefficients(&self, k: usize) -> &[f64] {
        &self.coeffs[k]
    }

    /// The `(r+1) × D` coefficient matrix (columns are entries).
    pub fn theta(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.coeffs.len(), self.layout.len(), |k, j| {
            self.coeffs[k][j]
        })
    }

    /// Interpolated vectorized factor at `lambda`.
    pub fn eval_vector(&self, lambda: f64) -> Vec<f64> {
        let t = self.poly.variable(lambda);
        let r = self.degree();
        let mut out = self.coeffs[r].clone();
        let coeffs = &self.coeffs;
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let start = c * CHUNK;
            for k in (0..r).rev() {
                let ck = &coeffs[k][start..start + chunk.len()];
                for (o, &a) in chunk.iter_mut().zip(ck) {
                    *o = *o * t + a;
                }
            }
        });
        out
    }

    /// Horner evaluation with a caller-supplied multiply-add
    /// `madd(acc, t, c) = acc * t + c`, called exactly `D·r` times.
    pub fn eval_vector_with(
        &self,
        lambda: f64,
        mut madd: impl FnMut(f64, f64, f64) -> f64,
    ) -> Vec<f64> {
        let t = self.poly.variable(lambda);
        let r = self.degree();
        let mut out = self.coeffs[r].clone();
        for k in (0..r).rev() {
            for (o, &a) in out.iter_mut().zip(&self.coeffs[k]) {
                *o = madd(*o, t, a);
            }
        }
        out
    }

    /// Interpolated factor at `lambda`. Its diagonal is not checked.
    pub fn eval(&self, lambda: f64) -> CholeskyFactor {
        let v = self.eval_vector(lambda);
        let m = self
            .layout
            .unvectorize_matrix(&v)
            .expect("coefficient rows have layout length");
        CholeskyFactor::from_lower_unchecked(m, FactorSource::Interpolated { lambda })
    }

    /// Compares interpolated against exact factors at each of `lambdas`.
    pub fn diagnostics(&self, h: &DenseMatrix, lambdas: &[f64]) -> Result<FitDiagnostics> {
        if lambdas.is_empty() {
            return Err(Error::InvalidGrid("no lambdas to diagnose".into()));
        }
        let mut nrmse = Vec::with_capacity(lambdas.len());
        let mut fro_ratio = Vec::with_capacity(lambdas.len());
        for &l in lambdas {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidLambda(l));
            }
            let exact = cholesky_shifted(h, l)?;
            let approx = self.eval(l);
            let (rms, fro) = factor_errors(&exact, &approx);
            nrmse.push((l, rms));
            fro_ratio.push((l, fro));
        }
        let max_nrmse = nrmse.iter().map(|&(_, e)| e).fold(0.0, f64::max);
        let max_fro_ratio = fro_ratio.iter().map(|&(_, e)| e).fold(0.0, f64::max);
        Ok(FitDiagnostics {
            nrmse_per_lambda: nrmse,
            max_nrmse,
            fro_ratio_per_lambda: fro_ratio,
            max_fro_ratio,
            residual_fro: self.residual_fro,
        })
    }
}

/// Per-λ fit quality.
///
/// NRMSE is the root mean squared entry error over the `D` lower-triangular
/// entries divided by the range of the exact entries. The Frobenius ratio is
/// the total error `‖L̃ − L‖_F` over the same range.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub nrmse_per_lambda: Vec<(f64, f64)>,
    pub max_nrmse: f64,
    pub fro_ratio_per_lambda: Vec<(f64, f64)>,
    pub max_fro_ratio: f64,
    pub residual_fro: f64,
}

/// `(nrmse, frobenius / range)` of `approx` against `exact`.
pub fn factor_errors(exact: &CholeskyFactor, approx: &CholeskyFactor) -> (f64, f64) {
    let h = exact.dim();
    let (e, a) = (exact.matrix(), approx.matrix());
    let mut sq = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for q in 0..h {
        let (ec, ac) = (&e.col(q)[q..], &a.col(q)[q..]);
        for (&x, &y) in ec.iter().zip(ac) {
            sq += (x - y) * (x - y);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    let d = (h * (h + 1) / 2) as f64;
    // A single distinct entry value has no range; fall back to its magnitude.
    let range = if hi > lo { hi - lo } else { hi.abs().max(lo.abs()) };
    let fro = sq.sqrt();
    if range > 0.0 {
        (fro / d.sqrt() / range, fro / range)
    } else if fro == 0.0 {
        (0.0, 0.0)
    } else {
        (f64::INFINITY, f64::INFINITY)
    }
}

/// `g` sample values from an increasing grid, evenly spread over its indices
/// and always including both ends.
pub fn pick_samples(grid: &[f64], g: usize) -> Result<Vec<f64>> {
    let q = grid.len();
    if g == 0 || g > q {
        return Err(Error::InvalidSearch(format!(
            "cannot pick {g} samples from a grid of {q}"
        )));
    }
    if g == 1 {
        return Ok(vec![grid[(q - 1) / 2]]);
    }
    Ok((0..g)
        .map(|i| grid[((i * (q - 1)) as f64 / (g - 1) as f64).round() as usize])
        .collect())
}
