use std::process::ExitCode;

use acar_cli::cli::Cli;
use acar_cli::commands::{configure_threads, exit_code, run_and_write};
use clap::error::ErrorKind;
use clap::Parser;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Err(e) = configure_threads().and_then(|_| run_and_write(&cli)) {
        eprintln!("error: {e:#}");
        return ExitCode::from(exit_code(&e) as u8);
    }
    ExitCode::SUCCESS
}
