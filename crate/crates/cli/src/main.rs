use std::process::ExitCode;

use ampsched_cli::app::{run_cli, Cli, THREADS_ENV};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var(THREADS_ENV).ok();
    match run_cli(cli, threads.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ampsched: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
