//! `elmo` — scenario-driven experiment runner.
//!
//! Exit codes: 0 success, 1 invariant failure, 2 usage/config error.

mod commands;
mod config;
mod csvout;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "elmo", version, about = "Source-routed multicast experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce the worked three-pod encoding example (161/83/62 bits)
    #[command(name = "example-fig3")]
    ExampleFig3,
    /// Run the full metric sweep for a scenario and write CSV reports
    Experiment { config: PathBuf },
    /// Exhaustively check invariants on a small scenario against oracles
    Verify { config: PathBuf },
    /// Replay a churn stream and report per-switch update statistics
    Churn { config: PathBuf },
    /// Apply the scenario's failure schedule and report impacted groups
    Fail { config: PathBuf },
    /// Encode one group described by a spec file and print the header
    Encode {
        /// Path to a group spec ([topology], [group], [encoding] sections)
        #[arg(long)]
        group: PathBuf,
        /// Print the wire bytes as a per-section hex dump
        #[arg(long)]
        hex: bool,
    },
}

fn main() -> ExitCode {
    if let Ok(workers) = std::env::var("ELMO_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ExampleFig3 => commands::example_fig3(),
        Command::Experiment { config } => commands::experiment(&config),
        Command::Verify { config } => commands::verify(&config),
        Command::Churn { config } => commands::churn(&config),
        Command::Fail { config } => commands::fail(&config),
        Command::Encode { group, hex } => commands::encode(&group, hex),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CmdError::Invariant(msg)) => {
            eprintln!("invariant violation: {msg}");
            ExitCode::from(1)
        }
        Err(commands::CmdError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
