mod args;
mod commands;
mod error;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, Result};
use output::Precision;

const THREADS_ENV: &str = "D2DLAB_THREADS";

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Param(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let p = Precision(cli.precision as usize);
    match &cli.command {
        Command::Fit(a) => commands::fit(a, p),
        Command::Policy(a) => commands::policy(a, p),
        Command::Tradeoff(a) => commands::tradeoff(a, p),
        Command::Simulate(a) => commands::simulate(a, p),
        Command::ValidateMstar(a) => commands::validate_mstar(a, p),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on argument errors, matching EXIT_PARAM.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("d2dlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
