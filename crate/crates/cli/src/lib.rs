//! Command-line experiment runner: synthetic data generation, cross-validated
//! λ search, factor-path accuracy, bound diagnostics and layout benchmarks.

pub mod args;
pub mod commands;
pub mod matfile;

use std::io::Write;
use std::path::{Path, PathBuf};

pub use args::{Cli, Command};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const IO: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("bad file format: {0}")]
    BadFormat(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing output: {0}")]
    Output(#[source] std::io::Error),
    #[error(transparent)]
    Core(#[from] ridgepath::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Numerical failures map to 2; invalid inputs detected by the core
    /// library count as usage errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::BadFormat(_) | CliError::Io { .. } | CliError::Output(_) => exit::IO,
            CliError::Core(e) if e.is_numerical() => exit::NUMERICAL,
            CliError::Core(_) => exit::USAGE,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e)
    }
}

/// Runs one parsed invocation inside a pool of `--threads` workers, writing
/// primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
            // Output is buffered because the pool needs a `Send` closure.
            let mut buf = Vec::new();
            let res = pool.install(|| commands::dispatch(cli.command, &mut buf));
            out.write_all(&buf)?;
            res
        }
        None => commands::dispatch(cli.command, out),
    }
}
