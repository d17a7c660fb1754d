//! Command-line front end for `lossgrid-core`.
//!
//! Exit codes: 0 success, 1 computation error, 2 usage error.

pub mod args;
mod commands;
pub mod grid;
pub mod output;

use std::fmt;

use args::{Cli, Command};

/// Invalid input detected before any computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}

/// Runs a parsed command. `argv` (without the program name) is recorded in
/// the metadata sidecar.
pub fn run(cli: &Cli, argv: &[String]) -> anyhow::Result<()> {
    let inputs = match &cli.command {
        Command::Analyze(a) => serde_json::to_value(a),
        Command::Tune(a) => serde_json::to_value(a),
        Command::Sweep(a) => serde_json::to_value(a),
        Command::Simulate(a) => serde_json::to_value(a),
        Command::Scaling(a) => serde_json::to_value(a),
    }?;
    let run = commands::Run {
        command: cli.command.name(),
        argv,
        inputs,
    };
    match &cli.command {
        Command::Analyze(a) => commands::analyze(&run, a),
        Command::Tune(a) => commands::tune(&run, a),
        Command::Sweep(a) => commands::sweep_cmd(&run, a),
        Command::Simulate(a) => commands::simulate_cmd(&run, a),
        Command::Scaling(a) => commands::scaling(&run, a),
    }
}
