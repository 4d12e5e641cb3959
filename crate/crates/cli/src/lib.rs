//! Experiment runner around the `simfair` library.
//!
//! Every subcommand is described by a [`RunSpec`]; the `cmd_*` functions in
//! [`commands`] execute one and write CSV results with a schema header and a
//! JSON metadata sidecar.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod spec;

pub use commands::{cmd_estimate, cmd_gen, cmd_robustness, cmd_sweep, cmd_train};
pub use error::{CliError, Result};
pub use spec::{Command, DataSource, Regularizer, RunSpec, YAdvSelector};

use args::{Cli, CliCommand};

/// Runs a parsed command line and returns a one-line summary.
pub fn run(cli: Cli) -> Result<String> {
    let (command, args) = match cli.command {
        CliCommand::Estimate(a) => (Command::Estimate, a),
        CliCommand::Robustness(a) => (Command::Robustness, a),
        CliCommand::Train(a) => (Command::Train, a),
        CliCommand::Sweep(a) => (Command::Sweep, a),
        CliCommand::Gen(a) => (Command::Gen, a),
    };
    let threads = args.threads;
    let spec = args.into_spec(command)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(|| execute(&spec))
}

pub fn execute(spec: &RunSpec) -> Result<String> {
    let out = spec.out.display();
    Ok(match spec.command {
        Command::Estimate => format!("wrote {} rows to {out}", cmd_estimate(spec)?.rows.len()),
        Command::Robustness => format!("wrote {} rows to {out}", cmd_robustness(spec)?.rows.len()),
        Command::Sweep => format!("wrote {} rows to {out}", cmd_sweep(spec)?.rows.len()),
        Command::Train => format!("trained {} model(s) into {out}", cmd_train(spec)?.len()),
        Command::Gen => format!("wrote {} samples to {out}", cmd_gen(spec)?.dataset.len()),
    })
}
