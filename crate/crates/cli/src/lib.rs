//! The `tfb-kit` command-line tool: training, Bayesianization, evaluation,
//! the toy regression demo and the self-check suite, plus their file
//! formats.

pub mod args;
pub mod checkpoint;
pub mod commands;
pub mod data;
pub mod error;
pub mod table;

use args::{Cli, Command};
use error::{CliError, CliResult};

/// Environment variable capping the worker thread count; 0 means automatic.
pub const THREADS_ENV: &str = "TFB_KIT_THREADS";

pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        CliError::Config(format!(
            "{THREADS_ENV} must be a non-negative integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Bayesianize(a) => commands::bayesianize(a),
        Command::Eval(a) => commands::eval(a),
        Command::DemoToy(a) => commands::demo_toy(a),
        Command::Verify(a) => commands::verify(a),
        Command::GenData(a) => commands::gen_data(a),
    }
}
