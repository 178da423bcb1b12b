//! `bartcs`: common causal support diagnostics from the command line.
//!
//! ```text
//! bartcs analyze  --input data.csv --out results/
//! bartcs simulate --cells desk --reps 50 --out sim/
//! bartcs profile  --preset profiling --out prof/
//! ```

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Flags;

#[derive(Debug, Parser)]
#[command(name = "bartcs", version, about = "Common causal support diagnostics with BART")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate effects with and without discarding, and report discards
    Analyze(Flags),
    /// Replicated comparison of strategies over simulated scenario cells
    Simulate(Flags),
    /// Regression-tree profiles of the units each rule flags
    Profile(Flags),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, flags) = match &cli.command {
        Command::Analyze(f) => ("analyze", f),
        Command::Simulate(f) => ("simulate", f),
        Command::Profile(f) => ("profile", f),
    };
    match commands::run(name, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(2)
        }
    }
}
