//! Library behind the `voi` command-line tool.
//!
//! [`execute`] runs a parsed [`Cli`] and returns what the binary prints, so
//! the commands can be driven in-process as well as from the shell.

pub mod args;
pub mod commands;
pub mod error;
pub mod estimators;
pub mod report;

pub use args::Cli;
pub use commands::Outcome;
pub use error::{CliError, CliResult};

use args::Command;

fn dispatch(command: &Command) -> CliResult<Outcome> {
    match command {
        Command::Evppi(a) => commands::run_evppi(a),
        Command::Compare(a) => commands::run_compare(a),
        Command::Sweep(a) => commands::run_sweep(a),
        Command::Vistool(a) => commands::run_vistool(a),
        Command::Simulate(a) => commands::run_simulate(a),
    }
}

/// Runs a command, inside a dedicated thread pool when `--threads` is set.
pub fn execute(cli: &Cli) -> CliResult<Outcome> {
    match cli.threads {
        None => dispatch(&cli.command),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| dispatch(&cli.command))
        }
    }
}
