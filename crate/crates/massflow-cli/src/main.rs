//! Batch front end: configure, run, and persist simulations, estimations and
//! verification suites reproducibly.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage/config error.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ConvergeArgs, EstimateArgs, GlobalArgs, SimulateArgs, VerifyArgs};

#[derive(Parser)]
#[command(
    name = "massflow",
    version,
    about = "Coalescing mass-carrying diffusions: simulation, estimation and statistical verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicate trajectories and write them as CSV.
    Simulate(SimulateArgs),
    /// Estimate observable curves over time, optionally with an exponent fit.
    Estimate(EstimateArgs),
    /// Run statistical verification suites; nonzero exit on failure.
    Verify(VerifyArgs),
    /// Dyadic-refinement stabilization study.
    Converge(ConvergeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: could not configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&cli.global, args),
        Command::Estimate(args) => commands::estimate(&cli.global, args),
        Command::Verify(args) => commands::verify(&cli.global, args),
        Command::Converge(args) => commands::converge(&cli.global, args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
