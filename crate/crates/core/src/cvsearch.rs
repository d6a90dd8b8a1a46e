//! Cross-validated λ selection.
//!
//! Every search splits the rows of a [`RidgeProblem`] into folds, builds the
//! training Hessian of each fold, scores candidate λ values on the held-out
//! rows, and averages the scores over folds. The selected λ is the smallest
//! one attaining the minimum mean error.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_shifted, randomized_svd, solve_chol, svd, truncated_svd, DenseMatrix, SvdFactors,
};
use crate::pichol::{exact_factors, fit_target, pick_samples, Basis, PolyFit};
use crate::ridge::{RidgeProblem, SINGULAR_DIAGONAL_TOL};
use crate::trivec::VecLayout;

/// Log-spaced candidate values, inclusive of both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidGrid(format!("bounds [{lo}, {hi}] must be positive")));
        }
        if count == 0 {
            return Err(Error::InvalidGrid("grid needs at least one value".into()));
        }
        if count == 1 {
            if hi != lo {
                return Err(Error::InvalidGrid("a single-value grid needs lo = hi".into()));
            }
            return Ok(LambdaGrid { values: vec![lo] });
        }
        if hi <= lo {
            return Err(Error::InvalidGrid(format!("hi {hi} must exceed lo {lo}")));
        }
        let (a, b) = (lo.log10(), hi.log10());
        let mut values: Vec<f64> = (0..count)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
            .collect();
        values[0] = lo;
        values[count - 1] = hi;
        Ok(LambdaGrid { values })
    }

    /// A grid of `count` points spanning `decades` decades centred on `center`.
    pub fn centered(center: f64, decades: f64, count: usize) -> Result<Self> {
        let half = 10f64.powf(decades / 2.0);
        Self::new(center / half, center * half, count)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one value".into()));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidGrid("grid values must be positive".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
        }
        Ok(LambdaGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spacing between neighbours in decades (0 for a single value).
    pub fn step_decades(&self) -> f64 {
        let q = self.values.len();
        if q < 2 {
            return 0.0;
        }
        (self.values[q - 1] / self.values[0]).log10() / (q - 1) as f64
    }
}

/// Assignment of sample rows to folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
    seed: u64,
    active: usize,
}

impl FoldPlan {
    /// Seeded uniform shuffle dealt round-robin into `k` folds.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        Self::check(n, k)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignments = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignments[i] = pos % k;
        }
        Ok(FoldPlan {
            k,
            assignments,
            seed,
            active: k,
        })
    }

    /// Like [`FoldPlan::new`], but positive and non-positive labels are
    /// shuffled separately so each fold gets a proportional share of both.
    pub fn stratified(labels: &[f64], k: usize, seed: u64) -> Result<Self> {
        let n = labels.len();
        Self::check(n, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] > 0.0).collect();
        let mut neg: Vec<usize> = (0..n).filter(|&i| labels[i] <= 0.0).collect();
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let mut assignments = vec![0; n];
        for (c, &i) in pos.iter().chain(neg.iter()).enumerate() {
            assignments[i] = c % k;
        }
        Ok(FoldPlan {
            k,
            assignments,
            seed,
            active: k,
        })
    }

    /// Stratified for ±1 labels, uniform otherwise.
    pub fn for_labels(labels: &[f64], k: usize, seed: u64) -> Result<Self> {
        if is_binary(labels) {
            Self::stratified(labels, k, seed)
        } else {
            Self::new(labels.len(), k, seed)
        }
    }

    fn check(n: usize, k: usize) -> Result<()> {
        if k < 2 {
            return Err(Error::InvalidFolds(format!("need at least 2 folds, got {k}")));
        }
        if n < k {
            return Err(Error::InvalidFolds(format!("{n} samples cannot fill {k} folds")));
        }
        Ok(())
    }

    /// Restricts searches to the first `count` folds (hold-out validation
    /// when `count = 1`).
    pub fn limit(mut self, count: usize) -> Result<Self> {
        if count == 0 || count > self.k {
            return Err(Error::InvalidFolds(format!(
                "cannot evaluate {count} of {} folds",
                self.k
            )));
        }
        self.active = count;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    /// Folds that searches evaluate.
    pub fn active_folds(&self) -> usize {
        self.active
    }

    pub fn validation_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn training_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

fn is_binary(y: &[f64]) -> bool {
    !y.is_empty() && y.iter().all(|&v| v == 1.0 || v == -1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// `√mean((Xθ − y)²)`.
    Rmse,
    /// Fraction of rows where the prediction sign differs from the label.
    Misclassification,
}

impl Metric {
    /// Misclassification for ±1 labels, RMSE otherwise.
    pub fn auto(y: &[f64]) -> Metric {
        if is_binary(y) {
            Metric::Misclassification
        } else {
            Metric::Rmse
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Misclassification => "misclassification",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rmse" => Ok(Metric::Rmse),
            "misclassification" | "misclass" | "error-rate" => Ok(Metric::Misclassification),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

/// Hold-out error of `theta` on validation rows.
pub fn holdout_error(theta: &[f64], x_val: &DenseMatrix, y_val: &[f64], metric: Metric) -> Result<f64> {
    if x_val.rows() == 0 {
        return Err(Error::EmptyValidationSet);
    }
    if y_val.len() != x_val.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} validation rows",
            y_val.len(),
            x_val.rows()
        )));
    }
    let pred = x_val.matvec(theta)?;
    let n = y_val.len() as f64;
    Ok(match metric {
        Metric::Rmse => {
            let sq: f64 = pred.iter().zip(y_val).map(|(p, y)| (p - y) * (p - y)).sum();
            (sq / n).sqrt()
        }
        Metric::Misclassification => {
            let wrong = pred
                .iter()
                .zip(y_val)
                .filter(|&(&p, &y)| (p >= 0.0) != (y > 0.0))
                .count();
            wrong as f64 / n
        }
    })
}

/// Seconds spent in each phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub assemble: f64,
    pub factorize: f64,
    pub vec: f64,
    pub fit: f64,
    pub interp: f64,
    pub solve: f64,
    pub predict: f64,
}

impl PhaseTimings {
    pub const NAMES: [&'static str; 7] = [
        "assemble", "factorize", "vec", "fit", "interp", "solve", "predict",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.assemble,
            self.factorize,
            self.vec,
            self.fit,
            self.interp,
            self.solve,
            self.predict,
        ]
    }

    pub fn total(&self) -> f64 {
        self.values().iter().sum()
    }

    fn accumulate(&mut self, other: &PhaseTimings) {
        self.assemble += other.assemble;
        self.factorize += other.factorize;
        self.vec += other.vec;
        self.fit += other.fit;
        self.interp += other.interp;
        self.solve += other.solve;
        self.predict += other.predict;
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Chol,
    PIChol,
    MChol,
    Svd,
    TSvd,
    RSvd,
    PINrmse,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Chol,
        Method::PIChol,
        Method::MChol,
        Method::Svd,
        Method::TSvd,
        Method::RSvd,
        Method::PINrmse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Chol => "chol",
            Method::PIChol => "pichol",
            Method::MChol => "mchol",
            Method::Svd => "svd",
            Method::TSvd => "tsvd",
            Method::RSvd => "rsvd",
            Method::PINrmse => "pinrmse",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

/// Errors of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    /// `(λ, error)` in increasing λ.
    pub errors: Vec<(f64, f64)>,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub method: Method,
    pub metric: Metric,
    /// `(λ, mean error over folds)` in increasing λ.
    pub per_lambda: Vec<(f64, f64)>,
    pub folds: Vec<FoldResult>,
    pub best_lambda: f64,
    pub best_error: f64,
    /// Phase times summed over folds.
    pub timings: PhaseTimings,
    pub wall_seconds: f64,
    /// Exact factorizations performed per fold.
    pub factorizations: usize,
}

impl CvReport {
    fn build(
        method: Method,
        metric: Metric,
        folds: Vec<FoldResult>,
        factorizations: usize,
        started: Instant,
    ) -> Result<Self> {
        let first = folds
            .first()
            .ok_or_else(|| Error::InvalidFolds("no folds evaluated".into()))?;
        let nf = folds.len() as f64;
        let per_lambda: Vec<(f64, f64)> = first
            .errors
            .iter()
            .enumerate()
            .map(|(i, &(l, _))| (l, folds.iter().map(|f| f.errors[i].1).sum::<f64>() / nf))
            .collect();
        let (best_lambda, best_error) = argmin(&per_lambda);
        let mut timings = PhaseTimings::default();
        for f in &folds {
            timings.accumulate(&f.timings);
        }
        Ok(CvReport {
            method,
            metric,
            per_lambda,
            folds,
            best_lambda,
            best_error,
            timings,
            wall_seconds: started.elapsed().as_secs_f64(),
            factorizations,
        })
    }

    pub const CSV_HEADER: &'static str =
        "method,fold,lambda,error,assemble_s,factorize_s,vec_s,fit_s,interp_s,solve_s,predict_s";

    /// One row per fold and λ, then one `mean` row per λ carrying the summed
    /// phase timings.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        let row = |w: &mut W, fold: &str, l: f64, e: f64, t: &PhaseTimings| -> io::Result<()> {
            write!(w, "{},{},{:e},{:e}", self.method, fold, l, e)?;
            for v in t.values() {
                write!(w, ",{v:.6}")?;
            }
            writeln!(w)
        };
        for f in &self.folds {
            let name = f.fold.to_string();
            for &(l, e) in &f.errors {
                row(&mut w, &name, l, e, &f.timings)?;
            }
        }
        for &(l, e) in &self.per_lambda {
            row(&mut w, "mean", l, e, &self.timings)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ASCII output")
    }
}

/// Smallest error, ties resolved toward the smallest λ. Input sorted by λ.
fn argmin(errors: &[(f64, f64)]) -> (f64, f64) {
    let mut best = (f64::NAN, f64::INFINITY);
    for &(l, e) in errors {
        if e < best.1 || best.0.is_nan() && !e.is_nan() {
            best = (l, e);
        }
    }
    best
}

struct FoldData {
    train: RidgeProblem,
    x_val: DenseMatrix,
    y_val: Vec<f64>,
}

fn fold_data(p: &RidgeProblem, folds: &FoldPlan, fold: usize) -> Result<FoldData> {
    if folds.assignments().len() != p.samples() {
        return Err(Error::InvalidFolds(format!(
            "plan covers {} rows, problem has {}",
            folds.assignments().len(),
            p.samples()
        )));
    }
    let tr = folds.training_rows(fold);
    let va = folds.validation_rows(fold);
    if va.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    let train = RidgeProblem::assemble(
        p.x().select_rows(&tr),
        tr.iter().map(|&i| p.y()[i]).collect(),
    )?;
    Ok(FoldData {
        train,
        x_val: p.x().select_rows(&va),
        y_val: va.iter().map(|&i| p.y()[i]).collect(),
    })
}

/// Exact Cholesky solve at every grid value.
pub fn grid_search_exact(
    p: &RidgeProblem,
    grid: &LambdaGrid,
    folds: &FoldPlan,
    metric: Metric,
) -> Result<CvReport> {
    let started = Instant::now();
    let mut results = Vec::new();
    for fold in 0..folds.active_folds() {
        let mut t = PhaseTimings::default();
        let data = timed(&mut t.assemble, || fold_data(p, folds, fold))?;
        let mut errors = Vec::with_capacity(grid.len());
        for &l in grid.values() {
            let factor = timed(&mut t.factorize, || cholesky_shifted(data.train.hessian(), l))?;
            let theta = timed(&mut t.solve, || solve_chol(&factor, data.train.gradient()))?;
            let e = timed(&mut t.predict, || {
                holdout_error(&theta, &data.x_val, &data.y_val, metric)
            })?;
            errors.push((l, e));
        }
        results.push(FoldResult {
            fold,
            errors,
            timings: t,
        });
    }
    CvReport::build(Method::Chol, metric, results, grid.len(), started)
}

/// Settings for interpolated search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiConfig {
    pub samples: usize,
    pub degree: usize,
    pub layout: crate::trivec::LayoutKind,
    pub h0: usize,
    pub basis: Basis,
}

impl Default for PiConfig {
    fn default() -> Self {
        PiConfig {
            samples: crate::pichol::DEFAULT_SAMPLES,
            degree: crate::pichol::DEFAULT_DEGREE,
            layout: crate::trivec::LayoutKind::Recursive,
            h0: crate::trivec::DEFAULT_H0,
            basis: Basis::Auto,
        }
    }
}

/// Exact factors at `cfg.samples` grid values, interpolated factors at the
/// rest of the grid.
pub fn grid_search_pichol(
    p: &RidgeProblem,
    grid: &LambdaGrid,
    folds: &FoldPlan,
    metric: Metric,
    cfg: &PiConfig,
) -> Result<CvReport> {
    let started = Instant::now();
    if cfg.samples <= cfg.degree {
        return Err(Error::InsufficientSamples {
            samples: cfg.samples,
            degree: cfg.degree,
        });
    }
    let samples = pick_samples(grid.values(), cfg.samples)?;
    let layout = VecLayout::new(cfg.layout, p.dim(), cfg.h0)?;
    let mut results = Vec::new();
    for fold in 0..folds.active_folds() {
        let mut t = PhaseTimings::default();
        let data = timed(&mut t.assemble, || fold_data(p, folds, fold))?;
        let factors = timed(&mut t.factorize, || {
            exact_factors(data.train.hessian(), &samples)
        })?;
        let target = timed(&mut t.vec, || layout.bulk_gather(&factors))?;
        drop(factors);
        let model = timed(&mut t.fit, || {
            fit_target(&target, &samples, cfg.degree, &layout, cfg.basis)
        })?;
        drop(target);
        let mut errors = Vec::with_capacity(grid.len());
        for &l in grid.values() {
            let factor = timed(&mut t.interp, || model.eval(l));
            let theta = timed(&mut t.solve, || {
                let (index, value) = factor.min_abs_diagonal();
                if value < SINGULAR_DIAGONAL_TOL {
                    return Err(Error::SingularInterpolant { index, value });
                }
                solve_chol(&factor, data.train.gradient())
            })?;
            let e = timed(&mut t.predict, || {
                holdout_error(&theta, &data.x_val, &data.y_val, metric)
            })?;
            errors.push((l, e));
        }
        results.push(FoldResult {
            fold,
            errors,
            timings: t,
        });
    }
    CvReport::build(Method::PIChol, metric, results, samples.len(), started)
}

/// Settings for multi-level narrowing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCholConfig {
    /// Initial centre, as log10 λ.
    pub center: f64,
    /// Initial half-width in decades.
    pub step: f64,
    /// Stop once the half-width is at most this.
    pub min_step: f64,
}

impl Default for MCholConfig {
    fn default() -> Self {
        MCholConfig {
            center: 0.0,
            step: 1.5,
            min_step: 0.0025,
        }
    }
}

impl MCholConfig {
    /// Number of narrowing rounds, `⌈log₂(step / min_step)⌉`.
    pub fn iterations(&self) -> usize {
        let mut s = self.step;
        let mut n = 0;
        while s > self.min_step {
            s /= 2.0;
            n += 1;
        }
        n
    }
}

/// Evaluates `{10^(c−s), 10^c, 10^(c+s)}`, moves `c` to the best of the
/// three, halves `s`, and repeats while `s > min_step`. Evaluations are
/// cached by exponent, so rounds after the first cost two new λ values.
pub fn mchol_search(
    p: &RidgeProblem,
    cfg: &MCholConfig,
    folds: &FoldPlan,
    metric: Metric,
) -> Result<CvReport> {
    let started = Instant::now();
    if !(cfg.step > cfg.min_step && cfg.min_step > 0.0 && cfg.center.is_finite()) {
        return Err(Error::InvalidSearch(format!(
            "need step > min_step > 0, got step {} and min_step {}",
            cfg.step, cfg.min_step
        )));
    }
    let nf = folds.active_folds();
    let mut timings = vec![PhaseTimings::default(); nf];
    let mut data = Vec::with_capacity(nf);
    for (fold, t) in timings.iter_mut().enumerate() {
        data.push(timed(&mut t.assemble, || fold_data(p, folds, fold))?);
    }
    // Exponent bits -> per-fold errors.
    let mut cache: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    let mut evaluate = |expo: f64, timings: &mut [PhaseTimings]| -> Result<f64> {
        if let Some((_, errs)) = cache.get(&expo.to_bits()) {
            return Ok(errs.iter().sum::<f64>() / nf as f64);
        }
        let l = 10f64.powf(expo);
        let mut errs = Vec::with_capacity(nf);
        for (d, t) in data.iter().zip(timings.iter_mut()) {
            let factor = timed(&mut t.factorize, || cholesky_shifted(d.train.hessian(), l))?;
            let theta = timed(&mut t.solve, || solve_chol(&factor, d.train.gradient()))?;
            errs.push(timed(&mut t.predict, || {
                holdout_error(&theta, &d.x_val, &d.y_val, metric)
            })?);
        }
        let mean = errs.iter().sum::<f64>() / nf as f64;
        cache.insert(expo.to_bits(), (l, errs));
        Ok(mean)
    };

    let (mut c, mut s) = (cfg.center, cfg.step);
    while s > cfg.min_step {
        let mut best = (c, f64::INFINITY);
        for expo in [c - s, c, c + s] {
            let e = evaluate(expo, &mut timings)?;
            if e < best.1 {
                best = (expo, e);
            }
        }
        c = best.0;
        s /= 2.0;
    }

    let mut points: Vec<(f64, Vec<f64>)> = cache.into_values().collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let evaluations = points.len();
    let results = (0..nf)
        .map(|fold| FoldResult {
            fold,
            errors: points.iter().map(|(l, errs)| (*l, errs[fold])).collect(),
            timings: timings[fold],
        })
        .collect();
    CvReport::build(Method::MChol, metric, results, evaluations, started)
}

/// Exact hold-out errors at `samples` grid values, fitted by one degree-r
/// polynomial in λ and evaluated over the grid.
pub fn pinrmse_search(
    p: &RidgeProblem,
    grid: &LambdaGrid,
    folds: &FoldPlan,
    metric: Metric,
    samples: usize,
    degree: usize,
) -> Result<CvReport> {
    let started = Instant::now();
    if samples <= degree {
        return Err(Error::InsufficientSamples { samples, degree });
    }
    let sample_lambdas = pick_samples(grid.values(), samples)?;
    let poly = PolyFit::new(&sample_lambdas, degree, Basis::Auto)?;
    let mut results = Vec::new();
    for fold in 0..folds.active_folds() {
        let mut t = PhaseTimings::default();
        let data = timed(&mut t.assemble, || fold_data(p, folds, fold))?;
        let mut sampled = Vec::with_capacity(samples);
        for &l in &sample_lambdas {
            let factor = timed(&mut t.factorize, || cholesky_shifted(data.train.hessian(), l))?;
            let theta = timed(&mut t.solve, || solve_chol(&factor, data.train.gradient()))?;
            sampled.push(timed(&mut t.predict, || {
                holdout_error(&theta, &data.x_val, &data.y_val, metric)
            })?);
        }
        let coeffs = timed(&mut t.fit, || poly.fit_values(&sampled))?;
        let errors = timed(&mut t.interp, || {
            grid.values()
                .iter()
                .map(|&l| (l, poly.eval(&coeffs, l)))
                .collect()
        });
        results.push(FoldResult {
            fold,
            errors,
            timings: t,
        });
    }
    CvReport::build(Method::PINrmse, metric, results, samples, started)
}

/// Which SVD of the training design matrix to use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvdKind {
    Full,
    Truncated {
        k: usize,
    },
    Randomized {
        k: usize,
        oversample: usize,
        power_iters: usize,
        seed: u64,
    },
}

/// One SVD per fold, then the closed-form ridge solution at every grid value.
pub fn grid_search_svd(
    p: &RidgeProblem,
    grid: &LambdaGrid,
    folds: &FoldPlan,
    metric: Metric,
    kind: SvdKind,
) -> Result<CvReport> {
    let started = Instant::now();
    let method = match kind {
        SvdKind::Full => Method::Svd,
        SvdKind::Truncated { .. } => Method::TSvd,
        SvdKind::Randomized { .. } => Method::RSvd,
    };
    let mut results = Vec::new();
    for fold in 0..folds.active_folds() {
        let mut t = PhaseTimings::default();
        let data = timed(&mut t.assemble, || fold_data(p, folds, fold))?;
        let x = data.train.x();
        let f: SvdFactors = timed(&mut t.factorize, || match kind {
            SvdKind::Full => svd(x),
            SvdKind::Truncated { k } => truncated_svd(x, k),
            SvdKind::Randomized {
                k,
                oversample,
                power_iters,
                seed,
            } => randomized_svd(x, k, oversample, power_iters, seed),
        })?;
        let uty = timed(&mut t.solve, || f.u.t_matvec(data.train.y()))?;
        let mut errors = Vec::with_capacity(grid.len());
        for &l in grid.values() {
            let theta = timed(&mut t.solve, || {
                let w: Vec<f64> = f
                    .sigma
                    .iter()
                    .zip(&uty)
                    .map(|(&s, &c)| {
                        let den = s * s + l;
                        if den > 0.0 {
                            s / den * c
                        } else {
                            0.0
                        }
                    })
                    .collect();
                f.v.matvec(&w)
            })?;
            let e = timed(&mut t.predict, || {
                holdout_error(&theta, &data.x_val, &data.y_val, metric)
            })?;
            errors.push((l, e));
        }
        results.push(FoldResult {
            fold,
            errors,
            timings: t,
        });
    }
    CvReport::build(method, metric, results, 1, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ridge::{append_intercept, solve_exact};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn problem(n: usize, d: usize, noise: f64, seed: u64) -> RidgeProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DenseMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let theta: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut y = x.matvec(&theta).unwrap();
        for v in &mut y {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += noise * e;
        }
        RidgeProblem::assemble(append_intercept(&x), y).unwrap()
    }

    #[test]
    fn grid_values() {
        let g = LambdaGrid::new(1e-2, 1e1, 4).unwrap();
        let expect = [1e-2, 1e-1, 1.0, 1e1];
        for (a, b) in g.values().iter().zip(expect) {
            assert!((a / b - 1.0).abs() < 1e-14);
        }
        assert_eq!(g.values()[0], 1e-2);
        assert_eq!(g.values()[3], 1e1);
        assert!((g.step_decades() - 1.0).abs() < 1e-14);
        assert!(LambdaGrid::new(1.0, 0.5, 3).is_err());
        assert!(LambdaGrid::new(0.0, 1.0, 3).is_err());
        assert!(LambdaGrid::new(1.0, 1.0, 1).is_ok());
        assert!(LambdaGrid::from_values(vec![1.0, 1.0]).is_err());
        let c = LambdaGrid::centered(0.03, 1.0, 31).unwrap();
        assert!((c.values()[15] / 0.03 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folds_are_nonempty_and_seeded() {
        let a = FoldPlan::new(23, 5, 9).unwrap();
        let b = FoldPlan::new(23, 5, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.assignments(), FoldPlan::new(23, 5, 10).unwrap().assignments());
        for f in 0..5 {
            let v = a.validation_rows(f).len();
            assert!(v == 4 || v == 5);
            assert_eq!(a.training_rows(f).len(), 23 - v);
        }
        assert!(FoldPlan::new(3, 5, 0).is_err());
        assert!(FoldPlan::new(10, 1, 0).is_err());
        assert!(a.clone().limit(0).is_err());
        assert_eq!(a.limit(1).unwrap().active_folds(), 1);
    }

    #[test]
    fn stratified_balances_labels() {
        let labels: Vec<f64> = (0..40).map(|i| if i < 10 { 1.0 } else { -1.0 }).collect();
        let plan = FoldPlan::for_labels(&labels, 5, 3).unwrap();
        for f in 0..5 {
            let pos = plan
                .validation_rows(f)
                .iter()
                .filter(|&&i| labels[i] > 0.0)
                .count();
            assert_eq!(pos, 2);
        }
    }

    #[test]
    fn holdout_metrics() {
        let x = DenseMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]).unwrap();
        let y = [1.0, -1.0, 1.0];
        assert_eq!(holdout_error(&[1.0, -1.0], &x, &[1.0, -1.0, 0.0], Metric::Rmse).unwrap(), 0.0);
        assert_eq!(holdout_error(&[0.0, 0.0], &x, &y, Metric::Rmse).unwrap(), 1.0);
        // Predictions (2, 1, 3) against (1, -1, 1): squared errors 1, 4, 4.
        let e = holdout_error(&[2.0, 1.0], &x, &y, Metric::Rmse).unwrap();
        assert!((e - 3.0f64.sqrt()).abs() < 1e-15);
        // Signs (+, +, +) against (+, -, +): one of three wrong.
        let m = holdout_error(&[2.0, 1.0], &x, &y, Metric::Misclassification).unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-15);
        let empty = DenseMatrix::zeros(0, 2);
        assert_eq!(
            holdout_error(&[0.0, 0.0], &empty, &[], Metric::Rmse),
            Err(Error::EmptyValidationSet)
        );
        assert_eq!(Metric::auto(&y), Metric::Misclassification);
        assert_eq!(Metric::auto(&[0.5, 1.0]), Metric::Rmse);
    }

    #[test]
    fn single_value_grid() {
        let p = problem(40, 3, 0.5, 1);
        let folds = FoldPlan::new(40, 4, 1).unwrap();
        let g = LambdaGrid::new(0.7, 0.7, 1).unwrap();
        let r = grid_search_exact(&p, &g, &folds, Metric::Rmse).unwrap();
        assert_eq!(r.best_lambda, 0.7);
        assert_eq!(r.per_lambda.len(), 1);
    }

    #[test]
    fn exact_search_matches_direct_solves() {
        let p = problem(50, 4, 0.5, 2);
        let folds = FoldPlan::new(50, 5, 2).unwrap();
        let grid = LambdaGrid::new(1e-2, 1e2, 9).unwrap();
        let r = grid_search_exact(&p, &grid, &folds, Metric::Rmse).unwrap();
        // Oracle: explicit fold loop with solve_exact.
        for (i, &l) in grid.values().iter().enumerate() {
            let mut total = 0.0;
            for f in 0..5 {
                let tr = folds.training_rows(f);
                let va = folds.validation_rows(f);
                let q = RidgeProblem::assemble(
                    p.x().select_rows(&tr),
                    tr.iter().map(|&i| p.y()[i]).collect(),
                )
                .unwrap();
                let th = solve_exact(&q, l).unwrap().theta;
                let xv = p.x().select_rows(&va);
                let pred = xv.matvec(&th).unwrap();
                let sq: f64 = pred
                    .iter()
                    .zip(&va)
                    .map(|(a, &j)| (a - p.y()[j]).powi(2))
                    .sum();
                total += (sq / va.len() as f64).sqrt();
            }
            assert!((r.per_lambda[i].1 - total / 5.0).abs() < 1e-12);
        }
        let min = r.per_lambda.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_error, min);
    }

    #[test]
    fn interior_minimum_found() {
        // Strong noise with many features gives an interior optimum.
        let p = problem(120, 20, 3.0, 5);
        let folds = FoldPlan::new(120, 5, 5).unwrap();
        let fine = LambdaGrid::new(1e-2, 1e4, 121).unwrap();
        let r = grid_search_exact(&p, &fine, &folds, Metric::Rmse).unwrap();
        assert!(r.best_lambda > fine.values()[0] && r.best_lambda < fine.values()[120]);
    }

    #[test]
    fn pichol_sample_errors_match_exact() {
        let p = problem(80, 12, 1.0, 6);
        let folds = FoldPlan::new(80, 4, 6).unwrap();
        let grid = LambdaGrid::new(1e-1, 1e1, 31).unwrap();
        let exact = grid_search_exact(&p, &grid, &folds, Metric::Rmse).unwrap();
        for (samples, degree, tol) in [(3, 2, 1e-6), (4, 2, 1e-3)] {
            let cfg = PiConfig {
                samples,
                degree,
                ..PiConfig::default()
            };
            let pi = grid_search_pichol(&p, &grid, &folds, Metric::Rmse, &cfg).unwrap();
            for l in pick_samples(grid.values(), samples).unwrap() {
                let i = grid.values().iter().position(|&v| v == l).unwrap();
                assert!((pi.per_lambda[i].1 - exact.per_lambda[i].1).abs() <= tol);
            }
            let step = grid.step_decades();
            assert!((pi.best_lambda / exact.best_lambda).log10().abs() <= step + 1e-9);
        }
    }

    #[test]
    fn mchol_fixed_point_and_counts() {
        let p = problem(100, 10, 2.0, 7);
        let folds = FoldPlan::new(100, 5, 7).unwrap();
        let cfg = MCholConfig::default();
        assert_eq!(cfg.iterations(), 10);
        let r = mchol_search(&p, &cfg, &folds, Metric::Rmse).unwrap();
        assert_eq!(r.factorizations, 3 + 2 * (cfg.iterations() - 1));
        assert!(r.factorizations <= 30);
        assert_eq!(r.per_lambda.len(), r.factorizations);
        let min = r.per_lambda.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_error, min);
        assert!(mchol_search(
            &p,
            &MCholConfig {
                center: 0.0,
                step: 0.001,
                min_step: 0.01
            },
            &folds,
            Metric::Rmse
        )
        .is_err());
    }

    #[test]
    fn mchol_stays_on_optimal_center() {
        // Start at the fine-grid optimum of a unimodal curve: the centre
        // never moves.
        let p = problem(100, 10, 2.0, 8);
        let folds = FoldPlan::new(100, 5, 8).unwrap();
        let fine = LambdaGrid::new(1e-3, 1e3, 601).unwrap();
        let r = grid_search_exact(&p, &fine, &folds, Metric::Rmse).unwrap();
        let c = r.best_lambda.log10();
        let m = mchol_search(
            &p,
            &MCholConfig {
                center: c,
                step: 0.5,
                min_step: 0.01,
            },
            &folds,
            Metric::Rmse,
        )
        .unwrap();
        assert!((m.best_lambda.log10() - c).abs() <= 0.01);
    }

    #[test]
    fn pinrmse_quadratic_and_exact_fit() {
        let p = problem(60, 6, 1.0, 9);
        let folds = FoldPlan::new(60, 3, 9).unwrap();
        let grid = LambdaGrid::new(1e-1, 1e1, 31).unwrap();
        let exact = grid_search_exact(&p, &grid, &folds, Metric::Rmse).unwrap();
        let r = pinrmse_search(&p, &grid, &folds, Metric::Rmse, 3, 2).unwrap();
        for l in pick_samples(grid.values(), 3).unwrap() {
            let i = grid.values().iter().position(|&v| v == l).unwrap();
            assert!((r.per_lambda[i].1 - exact.per_lambda[i].1).abs() < 1e-9);
        }
        assert_eq!(r.method, Method::PINrmse);
        let min = r.per_lambda.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_error, min);
    }

    #[test]
    fn pinrmse_recovers_quadratic_argmin() {
        let grid = LambdaGrid::new(1.0, 3.0, 21).unwrap();
        let xs = pick_samples(grid.values(), 4).unwrap();
        let poly = PolyFit::new(&xs, 2, Basis::Auto).unwrap();
        let f = |l: f64| (l - 2.0).powi(2) + 0.5;
        let vals: Vec<f64> = xs.iter().map(|&l| f(l)).collect();
        let c = poly.fit_values(&vals).unwrap();
        let errors: Vec<(f64, f64)> = grid.values().iter().map(|&l| (l, poly.eval(&c, l))).collect();
        let exact: Vec<(f64, f64)> = grid.values().iter().map(|&l| (l, f(l))).collect();
        assert_eq!(argmin(&errors).0, argmin(&exact).0);
    }

    #[test]
    fn svd_searches_agree_with_exact() {
        let p = problem(60, 6, 1.0, 10);
        let folds = FoldPlan::new(60, 3, 10).unwrap();
        let grid = LambdaGrid::new(1e-2, 1e2, 11).unwrap();
        let exact = grid_search_exact(&p, &grid, &folds, Metric::Rmse).unwrap();
        for kind in [SvdKind::Full, SvdKind::Truncated { k: 7 }] {
            let r = grid_search_svd(&p, &grid, &folds, Metric::Rmse, kind).unwrap();
            for (a, b) in r.per_lambda.iter().zip(&exact.per_lambda) {
                assert!((a.1 - b.1).abs() < 1e-8);
            }
        }
        let r = grid_search_svd(
            &p,
            &grid,
            &folds,
            Metric::Rmse,
            SvdKind::Randomized {
                k: 3,
                oversample: 2,
                power_iters: 2,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(r.method, Method::RSvd);
    }

    #[test]
    fn csv_shape() {
        let p = problem(30, 3, 1.0, 11);
        let folds = FoldPlan::new(30, 3, 11).unwrap();
        let grid = LambdaGrid::new(1e-1, 1e1, 5).unwrap();
        let r = grid_search_exact(&p, &grid, &folds, Metric::Rmse).unwrap();
        let csv = r.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CvReport::CSV_HEADER);
        assert_eq!(lines.len(), 1 + 3 * 5 + 5);
        for l in &lines[1..] {
            assert_eq!(l.split(',').count(), 11);
        }
        assert!(lines[1].starts_with("chol,0,"));
        assert!(lines.last().unwrap().starts_with("chol,mean,"));
    }

    #[test]
    fn tie_breaks_to_smallest_lambda() {
        assert_eq!(argmin(&[(0.1, 2.0), (0.2, 1.0), (0.3, 1.0)]), (0.2, 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn searches_are_deterministic(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = problem(40, 5, rng.gen_range(0.1..2.0), seed);
            let folds = FoldPlan::new(40, 4, seed).unwrap();
            let grid = LambdaGrid::new(1e-2, 1e1, 7).unwrap();
            let cfg = PiConfig::default();
            let a = grid_search_pichol(&p, &grid, &folds, Metric::Rmse, &cfg).unwrap();
            let b = grid_search_pichol(&p, &grid, &folds, Metric::Rmse, &cfg).unwrap();
            prop_assert_eq!(&a.per_lambda, &b.per_lambda);
            prop_assert_eq!(a.best_lambda, b.best_lambda);
        }
    }
}
