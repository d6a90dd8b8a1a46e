//! Seeded synthetic regression problems with a prescribed feature spectrum.
//!
//! The feature block is `QΣ`, where `Q` has orthonormal columns that are
//! also orthogonal to the all-ones vector, so appending the intercept column
//! keeps the singular values of the features intact. Coefficients are drawn
//! from `N(0, I)`; with Gaussian noise of standard deviation `σ` the
//! Bayes-optimal ridge parameter is `σ²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{orthonormalize, DenseMatrix};
use crate::ridge::{append_intercept, RidgeProblem};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spectrum {
    /// All feature singular values equal to one.
    Uniform,
    /// `σ_i = exp(−rate · i)` for `i = 0, …, d−1`.
    Decay(f64),
}

impl Spectrum {
    pub fn values(&self, d: usize) -> Vec<f64> {
        match *self {
            Spectrum::Uniform => vec![1.0; d],
            Spectrum::Decay(rate) => (0..d).map(|i| (-rate * i as f64).exp()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Continuous,
    /// `±1` labels from the sign of the noisy response.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub spectrum: Spectrum,
    pub noise_sigma: f64,
    pub label_kind: LabelKind,
    pub seed: u64,
}

/// Noise level of [`SynthSpec::reference`]; its square is the Bayes-optimal λ.
pub const REFERENCE_NOISE: f64 = 0.173_205_080_756_887_72;
/// Total feature decay `σ_{d−1} / σ_0 ≈ e^{−1.6}` of the reference spectrum.
pub const REFERENCE_DECAY: f64 = 1.6;

impl SynthSpec {
    /// The reference problem: `n = 12(d+1)` rows, features decaying by
    /// `e^{−1.6}` overall, continuous labels, noise variance 0.03.
    pub fn reference(d: usize, seed: u64) -> Self {
        let rate = if d > 1 {
            REFERENCE_DECAY / (d - 1) as f64
        } else {
            0.0
        };
        SynthSpec {
            n: 12 * (d + 1),
            d,
            spectrum: Spectrum::Decay(rate),
            noise_sigma: REFERENCE_NOISE,
            label_kind: LabelKind::Continuous,
            seed,
        }
    }
}

/// A generated problem. `x` includes the trailing intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub theta_true: Vec<f64>,
}

impl SynthData {
    pub fn problem(&self) -> Result<RidgeProblem> {
        RidgeProblem::assemble(self.x.clone(), self.y.clone())
    }
}

pub fn generate(spec: &SynthSpec) -> SynthData {
    let (n, d) = (spec.n, spec.d);
    if n < d + 1 {
        log::warn!("{n} rows for {} coefficients: problem is underdetermined", d + 1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Column 0 is the ones vector so the remaining columns come out centred.
    let mut basis = DenseMatrix::from_fn(n, d + 1, |_, j| {
        if j == 0 {
            1.0
        } else {
            StandardNormal.sample(&mut rng)
        }
    });
    orthonormalize(&mut basis);
    let sigma = spec.spectrum.values(d);
    let features = DenseMatrix::from_fn(n, d, |i, j| basis[(i, j + 1)] * sigma[j]);
    let x = append_intercept(&features);
    let theta_true: Vec<f64> = (0..=d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut y = x.matvec(&theta_true).expect("matching dimensions");
    for v in &mut y {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += spec.noise_sigma * e;
    }
    if spec.label_kind == LabelKind::Binary {
        for v in &mut y {
            *v = if *v >= 0.0 { 1.0 } else { -1.0 };
        }
    }
    SynthData { x, y, theta_true }
}
