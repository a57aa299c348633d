use std::process::ExitCode;

use clap::Parser;
use cvqss_cli::cli::{dispatch, Cli};

fn main() -> ExitCode {
    let code = match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
