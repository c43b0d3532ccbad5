//! Entry point of `tfb-kit`.

use std::process::ExitCode;

use clap::Parser;
use tfb_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match tfb_cli::configure_threads().and_then(|()| tfb_cli::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
