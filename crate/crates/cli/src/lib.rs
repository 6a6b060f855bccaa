//! The `searchassist` command line.

pub mod commands;
pub mod config;
pub mod error;
pub mod metrics;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "searchassist", version, about = "Train and serve a conversational search assistant")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the conditional user model from session logs.
    Ingest(commands::IngestArgs),
    /// Write synthetic session logs (and optionally a catalog).
    SynthLogs(commands::SynthLogsArgs),
    /// Train an A3C or Q-learning agent.
    Train(commands::TrainArgs),
    /// Train a grid of A3C configurations.
    Sweep(commands::SweepArgs),
    /// Evaluate a saved policy, or the random baseline.
    Validate(commands::ValidateArgs),
    /// Serve a trained policy over HTTP.
    Serve(commands::ServeArgs),
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::SynthLogs(a) => commands::synth_logs(a),
        Command::Train(a) => commands::train(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Validate(a) => commands::validate(a),
        Command::Serve(a) => commands::serve(a),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
