use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = poreflow::cli::Cli::parse();
    match poreflow::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(poreflow::cli::exit_code(&err))
        }
    }
}
