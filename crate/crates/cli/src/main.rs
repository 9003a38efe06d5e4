use std::process::ExitCode;

use clap::Parser;
use fmbc_cli::{execute, Cli};

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fmbc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
