//! Deterministic fixtures shared by the benchmarks.

use ridgepath::datagen::{generate, SynthSpec};
use ridgepath::linalg::cholesky_shifted;
use ridgepath::theory::random_spd;
use ridgepath::{CholeskyFactor, RidgeProblem};

/// Sample λ values used by the interpolation benchmarks.
pub const SAMPLE_LAMBDAS: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];

/// Exact factors of a random SPD matrix of order `h` at [`SAMPLE_LAMBDAS`].
pub fn sample_factors(h: usize, seed: u64) -> Vec<CholeskyFactor> {
    let a = random_spd(h, 1e-2, seed);
    SAMPLE_LAMBDAS
        .iter()
        .map(|&l| cholesky_shifted(&a, l).expect("shifted SPD matrix"))
        .collect()
}

/// Reference problem with `h` coefficients including the intercept.
pub fn reference_problem(h: usize, seed: u64) -> RidgeProblem {
    generate(&SynthSpec::reference(h - 1, seed))
        .problem()
        .expect("generated problem is consistent")
}
