//! `mpgibbs` command line: `simulate`, `run` and `diagnose`.
//!
//! Exit codes: 0 clean, 1 configuration error, 2 IO error, 3 the run
//! finished (or stopped) because of particle degeneracy.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_diagnose, cmd_run, cmd_simulate, DiagnoseOptions, RunOptions, RunStatus};
pub use config::{ExperimentConfig, ModelChoice};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    /// No usable chain: initialization never produced a valid particle system.
    #[error("degenerate run: {0}")]
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Degenerate(_) => EXIT_DEGENERATE,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        if e.is_degeneracy() {
            CliError::Degenerate(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mpgibbs", version, about = "Marginalized particle Gibbs for multiple state-space models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic observations and ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the configured sampler.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Independent chains, seeded `seed + k`.
        #[arg(long, default_value_t = 1)]
        chains: usize,
        /// Use the long iteration budget.
        #[arg(long)]
        full_budget: bool,
        /// Observation CSV; overrides the config data source.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Autocorrelation, IACT and summaries of sample files.
    Diagnose {
        /// Sample files written by `run`.
        files: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Reference sampler output for improvement factors.
        #[arg(long, requires = "method")]
        baseline: Option<PathBuf>,
        #[arg(long, requires = "baseline")]
        method: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        max_lag: usize,
    },
}

fn load_config(path: &std::path::Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output.dir".into()))?;
    Ok((cfg, out))
}

fn dispatch(cli: Cli) -> Result<RunStatus, CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let (cfg, out) = load_config(&config, seed, out)?;
            cmd_simulate(&cfg, &out)?;
            Ok(RunStatus::Clean)
        }
        Command::Run {
            config,
            out,
            seed,
            chains,
            full_budget,
            data,
        } => {
            let (cfg, out) = load_config(&config, seed, out)?;
            let opts = RunOptions {
                chains,
                full_budget,
                data,
            };
            cmd_run(&cfg, &out, &opts)
        }
        Command::Diagnose {
            files,
            out,
            baseline,
            method,
            max_lag,
        } => {
            let opts = DiagnoseOptions {
                baseline,
                method,
                max_lag,
            };
            cmd_diagnose(&files, &out, &opts)?;
            Ok(RunStatus::Clean)
        }
    }
}

/// Parse `args` (program name first) and run; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(RunStatus::Clean) => EXIT_OK,
        Ok(RunStatus::Degenerate) => EXIT_DEGENERATE,
        Err(e) => {
            eprintln!("mpgibbs: {e}");
            e.exit_code()
        }
    }
}
