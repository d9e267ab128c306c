mod args;
mod error;
mod estimate;
mod table;
mod theory_check;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::{CliError, CliResult};

/// Applies `SENSI_THREADS` to the global pool.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("SENSI_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|t| *t > 0).ok_or_else(|| {
        CliError::malformed(format!(
            "SENSI_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Other(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    log::debug!("sequential build; ignoring SENSI_THREADS = {threads}");
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Some(Command::TheoryCheck(t)) => theory_check::run(&t),
        Some(Command::Estimate(e)) => estimate::run(&e),
        None => estimate::run(&cli.estimate),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sensi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
