//! `ge-sentinel`: GE benchmarking, simulated training runs, the
//! early-stopping monitor and early-terminating grid search.
//!
//! Exit codes: 0 success or stopped, 1 internal failure, 2 usage or input
//! error, 3 completed without stopping.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

const THREADS_ENV: &str = "GE_SENTINEL_THREADS";

/// Failure classes mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

/// Completion states that are not errors.
pub enum Completion {
    Done,
    NotStopped,
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(raw) => Some(raw.trim().parse::<usize>().map_err(|_| {
            CliError::Input(format!("{THREADS_ENV}={raw:?} is not a thread count"))
        })?),
        Err(_) => flag,
    };
    if let Some(n) = threads.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Completion, CliError> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Bench(args) => commands::bench(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Monitor(args) => commands::monitor(args),
        Command::Gridsearch(args) => commands::gridsearch(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Completion::Done) => ExitCode::SUCCESS,
        Ok(Completion::NotStopped) => ExitCode::from(3),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
