use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use ridgepath::cvsearch::{
    grid_search_exact, grid_search_pichol, grid_search_svd, mchol_search, pinrmse_search,
    MCholConfig, PiConfig, SvdKind,
};
use ridgepath::datagen::{generate, LabelKind, Spectrum, SynthSpec, REFERENCE_NOISE};
use ridgepath::linalg::{cholesky_shifted, solve_chol};
use ridgepath::pichol::{exact_factors, fit_target, fit_with, pick_samples, Basis};
use ridgepath::theory::{check_main_bound, random_spd, BoundConfig, BoundReport};
use ridgepath::{
    CvReport, DenseMatrix, FoldPlan, LambdaGrid, LayoutKind, Method, Metric, RidgeProblem,
    VecLayout,
};

use crate::args::{
    BenchArgs, BoundArgs, CvArgs, FactorPathArgs, GenArgs, GridArgs, InterpArgs, LabelArg,
    SpectrumArg,
};
use crate::matfile;
use crate::{CliError, Command};

pub fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Gen(a) => cmd_gen(&a, out),
        Command::Cv(a) => cmd_cv(&a, out).map(|_| ()),
        Command::FactorPath(a) => cmd_factor_path(&a, out),
        Command::DiagnoseBound(a) => cmd_diagnose_bound(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
    }
}

/// Runs `body` against the file at `path`, or against `fallback` when no
/// path is given.
fn with_sink(
    path: Option<&Path>,
    fallback: &mut dyn Write,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = BufWriter::new(f);
            body(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| CliError::io(p, e))
        }
        None => Ok(body(fallback)?),
    }
}

pub fn synth_spec(a: &GenArgs) -> Result<SynthSpec, CliError> {
    let mut spec = SynthSpec::reference(a.d, a.seed);
    if let Some(n) = a.n {
        spec.n = n;
    }
    spec.spectrum = match (a.spectrum, a.rate) {
        (SpectrumArg::Uniform, None) => Spectrum::Uniform,
        (SpectrumArg::Uniform, Some(_)) => {
            return Err(CliError::Usage("--rate applies only to the decay spectrum".into()))
        }
        (SpectrumArg::Decay, Some(r)) if r.is_finite() && r >= 0.0 => Spectrum::Decay(r),
        (SpectrumArg::Decay, Some(r)) => {
            return Err(CliError::Usage(format!("decay rate must be finite and >= 0, got {r}")))
        }
        (SpectrumArg::Decay, None) => spec.spectrum,
    };
    let noise = a.noise.unwrap_or(REFERENCE_NOISE);
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(CliError::Usage(format!("noise must be finite and >= 0, got {noise}")));
    }
    spec.noise_sigma = noise;
    spec.label_kind = match a.labels {
        LabelArg::Continuous => LabelKind::Continuous,
        LabelArg::Binary => LabelKind::Binary,
    };
    if spec.n == 0 || spec.d == 0 {
        return Err(CliError::Usage("need n >= 1 and d >= 1".into()));
    }
    Ok(spec)
}

pub fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = synth_spec(a)?;
    let data = generate(&spec);
    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    matfile::save(&data.x, &a.out.join("X.mat"))?;
    matfile::save(&DenseMatrix::column_vector(&data.y)?, &a.out.join("y.mat"))?;
    matfile::save(
        &DenseMatrix::column_vector(&data.theta_true)?,
        &a.out.join("theta_true.mat"),
    )?;
    writeln!(out, "{},{},{}", a.out.display(), data.x.rows(), data.x.cols())?;
    Ok(())
}

fn lambda_grid(g: &GridArgs) -> Result<LambdaGrid, CliError> {
    Ok(LambdaGrid::new(g.lo, g.hi, g.q)?)
}

fn pi_config(i: &InterpArgs) -> PiConfig {
    PiConfig {
        samples: i.samples,
        degree: i.degree,
        layout: i.layout,
        h0: i.h0,
        basis: basis(i),
    }
}

fn basis(i: &InterpArgs) -> Basis {
    if i.raw_monomials {
        Basis::RawMonomial
    } else {
        Basis::Auto
    }
}

pub fn load_problem(x: &Path, y: &Path) -> Result<RidgeProblem, CliError> {
    let xm = matfile::load(x)?;
    let yv = matfile::as_vector(&matfile::load(y)?, "labels")?;
    Ok(RidgeProblem::assemble(xm, yv)?)
}

/// Runs the search, writes the CSV, then prints
/// `method,best_lambda,best_error,wall_seconds`.
pub fn cmd_cv(a: &CvArgs, out: &mut dyn Write) -> Result<CvReport, CliError> {
    let p = load_problem(&a.x, &a.y)?;
    let report = run_cv(&p, a)?;
    with_sink(a.out.as_deref(), out, |w| report.write_csv(w))?;
    writeln!(
        out,
        "{},{:e},{:e},{:.6}",
        report.method, report.best_lambda, report.best_error, report.wall_seconds
    )?;
    Ok(report)
}

pub fn run_cv(p: &RidgeProblem, a: &CvArgs) -> Result<CvReport, CliError> {
    let grid = lambda_grid(&a.grid)?;
    let metric = a.metric.unwrap_or_else(|| Metric::auto(p.y()));
    let mut folds = FoldPlan::for_labels(p.y(), a.folds, a.seed)?;
    if let Some(limit) = a.fold_limit {
        folds = folds.limit(limit)?;
    }
    let rank = a.rank.unwrap_or(p.dim().div_ceil(2));
    let report = match a.method {
        Method::Chol => grid_search_exact(p, &grid, &folds, metric)?,
        Method::PIChol => grid_search_pichol(p, &grid, &folds, metric, &pi_config(&a.interp))?,
        Method::MChol => {
            let center = a
                .center
                .unwrap_or(0.5 * (a.grid.lo.log10() + a.grid.hi.log10()));
            let cfg = MCholConfig {
                center,
                step: a.step,
                min_step: a.min_step,
            };
            mchol_search(p, &cfg, &folds, metric)?
        }
        Method::Svd => grid_search_svd(p, &grid, &folds, metric, SvdKind::Full)?,
        Method::TSvd => {
            grid_search_svd(p, &grid, &folds, metric, SvdKind::Truncated { k: rank })?
        }
        Method::RSvd => grid_search_svd(
            p,
            &grid,
            &folds,
            metric,
            SvdKind::Randomized {
                k: rank,
                oversample: a.oversample.unwrap_or_else(|| {
                    // Smallest training fold has n − ⌈n/k⌉ rows.
                    let rows = p.samples() - p.samples().div_ceil(a.folds.max(1));
                    DEFAULT_OVERSAMPLE.min(rows.min(p.dim()).saturating_sub(rank))
                }),
                power_iters: a.power_iters,
                seed: a.seed,
            },
        )?,
        Method::PINrmse => pinrmse_search(
            p,
            &grid,
            &folds,
            metric,
            a.interp.samples,
            a.interp.degree,
        )?,
    };
    Ok(report)
}

pub const DEFAULT_OVERSAMPLE: usize = 10;

pub const FACTOR_PATH_HEADER: &str = "lambda,nrmse,fro_ratio,sample";

fn parse_lambdas(text: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v: f64 = part
            .parse()
            .map_err(|_| CliError::Usage(format!("'{part}' is not a number")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Usage(format!("lambda must be positive, got {v}")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::Usage("empty lambda list".into()));
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// One row per λ: NRMSE and Frobenius error over range of the interpolated
/// factor, and whether λ was an exact sample.
pub fn cmd_factor_path(a: &FactorPathArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let lambdas = match &a.lambdas {
        Some(text) => parse_lambdas(text)?,
        None => lambda_grid(&a.grid)?.values().to_vec(),
    };
    let h = match (&a.hessian, &a.design) {
        (Some(path), _) => matfile::load(path)?,
        (None, Some(path)) => matfile::load(path)?.gram(),
        (None, None) => return Err(CliError::Usage("need --hessian or --design".into())),
    };
    if !h.is_square() {
        return Err(CliError::Usage(format!(
            "H must be square, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    let samples = pick_samples(&lambdas, a.interp.samples)?;
    let layout = VecLayout::new(a.interp.layout, h.rows(), a.interp.h0)?;
    let model = fit_with(&h, &samples, a.interp.degree, &layout, basis(&a.interp))?;
    let diag = model.diagnostics(&h, &lambdas)?;
    with_sink(a.out.as_deref(), out, |w| {
        writeln!(w, "{FACTOR_PATH_HEADER}")?;
        for (&(l, e), &(_, f)) in diag.nrmse_per_lambda.iter().zip(&diag.fro_ratio_per_lambda) {
            writeln!(w, "{l:e},{e:e},{f:e},{}", samples.contains(&l))?;
        }
        Ok(())
    })?;
    eprintln!(
        "max_nrmse {:e}, max_fro_ratio {:e}, fit residual {:e}",
        diag.max_nrmse, diag.max_fro_ratio, diag.residual_fro
    );
    Ok(())
}

/// `trial,seed,` followed by the bound report columns.
pub fn bound_header() -> String {
    format!("trial,seed,{}", BoundReport::CSV_HEADER)
}

pub fn cmd_diagnose_bound(a: &BoundArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.order == 0 {
        return Err(CliError::Usage("--order must be at least 1".into()));
    }
    if !(a.shift >= 0.0 && a.shift.is_finite()) {
        return Err(CliError::Usage(format!("--shift must be >= 0, got {}", a.shift)));
    }
    let cfg = BoundConfig {
        samples: a.samples,
        degree: a.degree,
        r_grid: a.r_grid,
        sweep: a.sweep,
        ..BoundConfig::new(a.lambda_c, a.gamma, a.w)
    };
    let mut rows = Vec::new();
    let (mut violations, mut worst) = (0usize, 0.0f64);
    for trial in 0..a.trials {
        let seed = a.seed.wrapping_add(trial as u64);
        let m = random_spd(a.order, a.shift, seed);
        for r in check_main_bound(&m, &cfg)? {
            violations += usize::from(!r.satisfied);
            if r.rhs > 0.0 {
                worst = worst.max(r.lhs / r.rhs);
            }
            rows.push(format!("{trial},{seed},{}", r.csv_row()));
        }
    }
    with_sink(a.out.as_deref(), out, |w| {
        writeln!(w, "{}", bound_header())?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    eprintln!(
        "{} reports, {violations} violations, max lhs/rhs {worst:e}",
        rows.len()
    );
    Ok(())
}

pub const BENCH_HEADER: &str = "h,method,layout,reps,factorize_s,vec_s,fit_s,interp_s,solve_s";

#[derive(Debug, Clone, Copy, Default)]
struct Phases {
    factorize: f64,
    vec: f64,
    fit: f64,
    interp: f64,
    solve: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn median_phases(runs: &[Phases]) -> Phases {
    let col = |f: fn(&Phases) -> f64| median(runs.iter().map(f).collect());
    Phases {
        factorize: col(|p| p.factorize),
        vec: col(|p| p.vec),
        fit: col(|p| p.fit),
        interp: col(|p| p.interp),
        solve: col(|p| p.solve),
    }
}

fn secs<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *slot = t.elapsed().as_secs_f64();
    out
}

/// Median phase timings per size: one exact solve, then the interpolated
/// path under each layout sharing the same exact sample factors.
pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.reps == 0 || a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(CliError::Usage("need reps >= 1 and nonzero sizes".into()));
    }
    let grid = LambdaGrid::new(1e-3, 1.0, 31)?;
    let samples = pick_samples(grid.values(), a.samples)?;
    let probe = grid.values()[grid.len() / 2 + 1];
    let layouts = [LayoutKind::RowWise, LayoutKind::FullMatrix, LayoutKind::Recursive];
    let mut rows = Vec::new();
    for &h in &a.sizes {
        let m = random_spd(h, 1e-2, a.seed);
        let b: Vec<f64> = (0..h).map(|i| 1.0 + i as f64 / h as f64).collect();
        let mut exact = Vec::with_capacity(a.reps);
        let mut interp = vec![Vec::with_capacity(a.reps); layouts.len()];
        for _ in 0..a.reps {
            let mut p = Phases::default();
            let f = secs(&mut p.factorize, || cholesky_shifted(&m, probe))?;
            secs(&mut p.solve, || solve_chol(&f, &b))?;
            exact.push(p);

            let mut shared = 0.0;
            let factors = secs(&mut shared, || exact_factors(&m, &samples))?;
            for (slot, &kind) in interp.iter_mut().zip(&layouts) {
                let layout = VecLayout::new(kind, h, a.h0)?;
                let mut p = Phases {
                    factorize: shared,
                    ..Phases::default()
                };
                let target = secs(&mut p.vec, || layout.bulk_gather(&factors))?;
                let model = secs(&mut p.fit, || {
                    fit_target(&target, &samples, a.degree, &layout, Basis::Auto)
                })?;
                let f = secs(&mut p.interp, || model.eval(probe));
                secs(&mut p.solve, || solve_chol(&f, &b))?;
                slot.push(p);
            }
        }
        rows.push((h, "chol", "none", median_phases(&exact)));
        for (runs, kind) in interp.iter().zip(&layouts) {
            rows.push((h, "pichol", kind.name(), median_phases(runs)));
        }
    }
    with_sink(a.out.as_deref(), out, |w| {
        writeln!(w, "{BENCH_HEADER}")?;
        for (h, method, layout, p) in &rows {
            writeln!(
                w,
                "{h},{method},{layout},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                a.reps, p.factorize, p.vec, p.fit, p.interp, p.solve
            )?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_lists() {
        assert_eq!(parse_lambdas("0.3, 0.1,0.3").unwrap(), vec![0.1, 0.3]);
        assert!(matches!(parse_lambdas(""), Err(CliError::Usage(_))));
        assert!(matches!(parse_lambdas(" , "), Err(CliError::Usage(_))));
        assert!(matches!(parse_lambdas("0.1,-1"), Err(CliError::Usage(_))));
        assert!(matches!(parse_lambdas("abc"), Err(CliError::Usage(_))));
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
