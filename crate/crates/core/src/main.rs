use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let config = vacq::cli::RunConfig::parse();
    let stdout = std::io::stdout();
    match vacq::cli::run(&config, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
