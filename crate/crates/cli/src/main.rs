//! `npp`: normalized power prior analyses from the command line.
//!
//! Exit codes: 0 on success, 2 for configuration or schema errors, 3 for
//! numerical-domain errors such as a power parameter below its propriety bound.

mod analyze;
mod failure;
mod io;
mod studies;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::failure::{Failure, Outcome};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_190_603;

#[derive(Debug, Parser)]
#[command(name = "npp", version, about = "Bayesian borrowing of historical data with normalized power priors")]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Posterior analysis of one dataset under a borrowing method.
    Analyze(analyze::AnalyzeArgs),
    /// Path-sampling estimate of log C(δ), checked against the closed form.
    ScaleFactor(studies::ScaleFactorArgs),
    /// Simulation experiments.
    #[command(subcommand)]
    Simulate(studies::SimulateCommand),
    /// Posterior means and δ summaries along one data axis.
    Sweep(studies::SweepArgs),
    /// Reproduce a case-study table and compare it with the reference values.
    Case(studies::CaseArgs),
}

/// Cap the worker pool at `NPP_THREADS` when set.
fn configure_threads() -> Outcome<()> {
    let Ok(text) = std::env::var("NPP_THREADS") else {
        return Ok(());
    };
    let threads: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("NPP_THREADS must be a positive integer, got `{text}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::config(format!("cannot size the worker pool: {e}")))
}

fn run(cli: &Cli) -> Outcome<()> {
    configure_threads()?;
    match &cli.command {
        Command::Analyze(args) => analyze::run(args),
        Command::ScaleFactor(args) => studies::scale_factor(args),
        Command::Simulate(command) => studies::simulate(command),
        Command::Sweep(args) => studies::sweep(args),
        Command::Case(args) => studies::case(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code()
        }
    }
}
