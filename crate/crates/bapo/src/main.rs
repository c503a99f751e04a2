use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = bapo::cli::Cli::parse();
    match bapo::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
