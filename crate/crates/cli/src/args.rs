use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ridgepath::{LayoutKind, Method, Metric};

#[derive(Debug, Parser)]
#[command(name = "ridgepath", version, about = "Ridge regularization path experiments")]
pub struct Cli {
    /// Worker threads for parallel kernels.
    #[arg(long, global = true, env = "RIDGEPATH_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic problem as X.mat, y.mat and theta_true.mat.
    Gen(GenArgs),
    /// Cross-validated λ search with one method.
    Cv(CvArgs),
    /// Accuracy of interpolated factors along a λ path.
    FactorPath(FactorPathArgs),
    /// Check the interpolation error bound on random SPD matrices.
    DiagnoseBound(BoundArgs),
    /// Time factorization, vectorization, fitting and interpolation.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpectrumArg {
    Uniform,
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelArg {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Feature count; an intercept column is appended.
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    /// Row count [default: 12(d+1)].
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum, default_value_t = SpectrumArg::Decay)]
    pub spectrum: SpectrumArg,
    /// Decay rate per feature [default: 1.6/(d-1)].
    #[arg(long)]
    pub rate: Option<f64>,
    /// Noise standard deviation [default: √0.03].
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_enum, default_value_t = LabelArg::Continuous)]
    pub labels: LabelArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

/// λ grid, log-spaced over `[lo, hi]`.
#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,
    #[arg(long, default_value_t = 31)]
    pub q: usize,
}

/// Interpolation settings.
#[derive(Debug, Clone, Args)]
pub struct InterpArgs {
    /// Exact factorizations per fold (g).
    #[arg(long = "samples", short = 'g', default_value_t = 4)]
    pub samples: usize,
    /// Polynomial degree (r).
    #[arg(long = "degree", short = 'r', default_value_t = 2)]
    pub degree: usize,
    #[arg(long, default_value = "recursive")]
    pub layout: LayoutKind,
    /// Leaf size of the recursive layout.
    #[arg(long, default_value_t = 64)]
    pub h0: usize,
    /// Fit in raw λ even when the Vandermonde matrix is ill-conditioned.
    #[arg(long)]
    pub raw_monomials: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    /// Design matrix (binary matrix file or CSV with header).
    #[arg(long)]
    pub x: PathBuf,
    /// Labels as a single-column matrix.
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, default_value = "pichol")]
    pub method: Method,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub interp: InterpArgs,
    /// Hold-out metric [default: misclassification for ±1 labels, else rmse].
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Evaluate only the first this many folds.
    #[arg(long)]
    pub fold_limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial log10 λ for mchol [default: midpoint of the grid in log10].
    #[arg(long, allow_negative_numbers = true)]
    pub center: Option<f64>,
    /// Initial mchol half-width in decades (s).
    #[arg(long, default_value_t = 1.5)]
    pub step: f64,
    /// Final mchol half-width in decades.
    #[arg(long, default_value_t = 0.0025)]
    pub min_step: f64,
    /// Rank for tsvd and rsvd [default: half the coefficient count].
    #[arg(long)]
    pub rank: Option<usize>,
    /// Extra sketch columns for rsvd [default: 10, capped to fit the matrix].
    #[arg(long)]
    pub oversample: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub power_iters: usize,
    /// CSV destination [default: stdout, before the summary line].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FactorPathArgs {
    /// Symmetric positive definite matrix H.
    #[arg(long, conflicts_with = "design", required_unless_present = "design")]
    pub hessian: Option<PathBuf>,
    /// Design matrix X; H = XᵀX.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Comma-separated λ values; overrides the grid.
    #[arg(long)]
    pub lambdas: Option<String>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub interp: InterpArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    /// Matrix order.
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_c: f64,
    /// Half-width of the evaluated interval.
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Half-width of the sampled interval.
    #[arg(long, default_value_t = 0.25)]
    pub w: f64,
    #[arg(short = 'g', long = "samples", default_value_t = 4)]
    pub samples: usize,
    #[arg(short = 'r', long = "degree", default_value_t = 2)]
    pub degree: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Diagonal shift added to each random Gram matrix.
    #[arg(long, default_value_t = 0.5)]
    pub shift: f64,
    /// Grid points for the remainder maximum.
    #[arg(long, default_value_t = 33)]
    pub r_grid: usize,
    /// Evaluation points across the interval.
    #[arg(long, default_value_t = 21)]
    pub sweep: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated matrix orders.
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024")]
    pub sizes: Vec<usize>,
    /// Repetitions per size; medians are reported.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(short = 'g', long = "samples", default_value_t = 4)]
    pub samples: usize,
    #[arg(short = 'r', long = "degree", default_value_t = 2)]
    pub degree: usize,
    #[arg(long, default_value_t = 64)]
    pub h0: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn cv_defaults() {
        let cli = Cli::try_parse_from(["ridgepath", "cv", "--x", "a", "--y", "b"]).unwrap();
        let Command::Cv(a) = cli.command else { panic!("expected cv") };
        assert_eq!(a.method, Method::PIChol);
        assert_eq!((a.grid.lo, a.grid.hi, a.grid.q), (1e-3, 1.0, 31));
        assert_eq!((a.interp.samples, a.interp.degree), (4, 2));
        assert_eq!((a.step, a.min_step), (1.5, 0.0025));
        assert_eq!(a.interp.layout, LayoutKind::Recursive);
    }

    #[test]
    fn negative_center_parses() {
        let cli = Cli::try_parse_from([
            "ridgepath", "cv", "--x", "a", "--y", "b", "--method", "mchol", "--center", "-1.5",
        ])
        .unwrap();
        let Command::Cv(a) = cli.command else { panic!("expected cv") };
        assert_eq!(a.center, Some(-1.5));
        assert_eq!(a.method, Method::MChol);
    }

    #[test]
    fn rejects_unknown_method() {
        assert!(Cli::try_parse_from(["ridgepath", "cv", "--x", "a", "--y", "b", "--method", "qr"]).is_err());
    }

    #[test]
    fn factor_path_needs_one_matrix() {
        assert!(Cli::try_parse_from(["ridgepath", "factor-path"]).is_err());
        assert!(
            Cli::try_parse_from(["ridgepath", "factor-path", "--hessian", "h", "--design", "x"]).is_err()
        );
        assert!(Cli::try_parse_from(["ridgepath", "factor-path", "--design", "x"]).is_ok());
    }

    #[test]
    fn bench_sizes_list() {
        let cli = Cli::try_parse_from(["ridgepath", "bench", "--sizes", "8,16", "--reps", "3"]).unwrap();
        let Command::Bench(a) = cli.command else { panic!("expected bench") };
        assert_eq!(a.sizes, vec![8, 16]);
    }
}
