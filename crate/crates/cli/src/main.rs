//! `vessel-scales` command-line front end.

mod decompose;
mod evaluate;
mod loss;
mod output;
mod stats;
mod synth;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "vessel-scales",
    version,
    about = "Multi-scale decomposition of 3D vessel masks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split masks into branches and scale masks.
    Decompose(decompose::Args),
    /// Compare predicted masks against ground truth.
    Evaluate(evaluate::Args),
    /// Per-volume branch radius statistics.
    Stats(stats::Args),
    /// Rasterize a synthetic vessel phantom from a JSON spec.
    Synth(synth::Args),
    /// Evaluate the multi-scale contrastive loss on an embedding batch.
    Loss(loss::Args),
}

/// Invalid invocation detected after argument parsing; exits with 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Decompose(a) => decompose::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Stats(a) => stats::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Loss(a) => loss::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
