//! `stochconf <subcommand> --config <path> [--out <dir>]`
//!
//! Exit codes: 0 success (whatever the verdict), 2 configuration error, 3 data error,
//! 4 internal error. `STOCHCONF_THREADS` bounds the number of worker threads.

// `!(x >= 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Config, Stage};
use stages::{run_stage, CliError, Context};

#[derive(Parser)]
#[command(name = "stochconf", version, about = "Stochastic conformance, non-conformance risk and STL transference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory for stage artifacts.
    #[arg(long, default_value = "stochconf-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load trajectory pairs and split them into calibration and test sets.
    Simulate(Common),
    /// Compute distances (and robustness values) for every pair.
    Score(Common),
    /// Conformal bound on the calibration distances.
    Calibrate(Common),
    /// (epsilon, delta)-conformance verdict and validation score.
    Check(Common),
    /// VaR/CVaR non-conformance risk with confidence bounds.
    Risk(Common),
    /// Transfer the robustness guarantee of system 1 to system 2.
    Transfer(Common),
    /// Worst-case conformance over the input set.
    Worstcase(Common),
    /// Merge stage artifacts into report.json and histogram CSVs.
    Report(Common),
    /// All stages of the configured mode.
    Run(Common),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("STOCHCONF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Config(config::ConfigError(vec![format!("STOCHCONF_THREADS must be a positive integer, got {v:?}")])))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (stage, common) = match cli.command {
        Command::Simulate(c) => (Some(Stage::Simulate), c),
        Command::Score(c) => (Some(Stage::Score), c),
        Command::Calibrate(c) => (Some(Stage::Calibrate), c),
        Command::Check(c) => (Some(Stage::Check), c),
        Command::Risk(c) => (Some(Stage::Risk), c),
        Command::Transfer(c) => (Some(Stage::Transfer), c),
        Command::Worstcase(c) => (Some(Stage::Worstcase), c),
        Command::Report(c) => (Some(Stage::Report), c),
        Command::Run(c) => (None, c),
    };
    let cfg = Config::load(&common.config)?;
    let mut ctx = Context::new(common.out);
    match stage {
        Some(s) => run_stage(s, &cfg, &mut ctx),
        None => cfg.pipeline().into_iter().try_for_each(|s| run_stage(s, &cfg, &mut ctx)),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
