//! Command-line front end: `run`, `diagnose`, `ed`, `detect`, `profile`, `verify`.

pub mod commands;
pub mod presets;
pub mod scenario;
pub mod selfsimilar;
pub mod verify;

use clap::{Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::path::PathBuf;
use thiserror::Error;

pub use scenario::Scenario;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration; nothing was run.
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "wavemap", version, about = "Wave maps into the sphere: evolution, diagnostics and blow-up detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    Q,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Identities,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve a scenario and write series.csv, snapshots and summary.json.
    Run {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in scenario name.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute diagnostics from a stored history directory.
    Diagnose {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Scenario file; defaults to the echo in the history's summary.json.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Energy dispersion table of one snapshot.
    Ed {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Scan a history for concentration events and classify them.
    Detect {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to `<history>/detect`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate a harmonic profile and report its energy.
    Profile {
        #[arg(long, value_enum)]
        kind: ProfileKind,
        /// Scale λ of Q.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Radial nodes for Q.
        #[arg(long, default_value_t = 8192)]
        nx: usize,
        /// Outer radius for Q.
        #[arg(long, default_value_t = 64.0)]
        r_max: f64,
        #[arg(long, default_value_t = 1)]
        degree: u32,
        /// Boundary value ψ(∞) of the hyperbolic profile.
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
        limit: f64,
        #[arg(long, default_value_t = 12.0)]
        y_max: f64,
        /// CSV destination; stdout gets the energy report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in verification suites.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
    },
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
