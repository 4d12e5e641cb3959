use std::process::ExitCode;

use clap::Parser;
use simfair_cli::args::Cli;

fn main() -> ExitCode {
    match simfair_cli::run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("simfair: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
