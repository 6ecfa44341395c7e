//! `phadapt`: run forward solves, adjoint comparisons and adaptive
//! refinement from a JSON config and write CSV results.
//!
//! Exit codes: 0 on success, 1 for usage, config or IO problems, 2 when a
//! numerical stage fails.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, Experiment, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config {0}: {1}")]
    Config(PathBuf, ConfigError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical failure: {0}")]
    Numeric(#[from] phadapt_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "phadapt", version, about = "Adaptive time grids for linear port-Hamiltonian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Implicit Euler solve on the configured grid.
    Simulate(Common),
    /// Exact vs. block-Jacobi adjoint for a point load.
    AdjointCompare(Common),
    /// Goal-oriented adaptive refinement.
    Adapt(Common),
    /// Uniform and adaptive strategies side by side.
    Compare(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "PHADAPT_THREADS")]
    threads: Option<usize>,
    /// Recorded in the summary. Nothing in the pipeline is random.
    #[arg(long)]
    seed: Option<u64>,
}

const DEFAULT_OUT: &str = "phadapt-out";

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::AdjointCompare(c) => ("adjoint-compare", c),
        Command::Adapt(c) => ("adapt", c),
        Command::Compare(c) => ("compare", c),
    };

    let threads = match common.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            n
        }
        None => rayon::current_num_threads(),
    };

    let cfg = ExperimentConfig::load(&common.config).map_err(|e| CliError::Config(common.config.clone(), e))?;
    let exp = Experiment::resolve(&cfg).map_err(|e| CliError::Config(common.config.clone(), e))?;
    let out = common
        .out
        .clone()
        .or_else(|| exp.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let out = output::prepare_dir(&out)?;
    std::fs::write(out.join("config.json"), cfg.to_json())?;

    let ctx = commands::Context {
        exp: &exp,
        out: &out,
        seed: common.seed,
        threads,
    };
    match cli.command {
        Command::Simulate(_) => commands::simulate(&ctx)?,
        Command::AdjointCompare(_) => commands::adjoint_compare(&ctx)?,
        Command::Adapt(_) => commands::adapt(&ctx)?,
        Command::Compare(_) => commands::compare(&ctx)?,
    }
    eprintln!("{name}: wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
