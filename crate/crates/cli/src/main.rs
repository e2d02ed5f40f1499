//! `jointflow` command-line interface.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod args;
mod commands;
mod files;

#[derive(Debug, Parser)]
#[command(name = "jointflow", version, about = "Joint motion estimation and image sequence reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reconstruct a sequence and its flows jointly.
    Joint(commands::JointArgs),
    /// Estimate the flow between two frames.
    Flow(commands::FlowArgs),
    /// Frame-wise TV denoising (no motion coupling).
    Denoise(commands::DenoiseArgs),
    /// Compare a result directory with ground truth and emit a CSV row.
    Evaluate(commands::EvaluateArgs),
    /// Generate a synthetic blob sequence with exact flows.
    Synth(commands::SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Joint(a) => commands::joint(a),
        Command::Flow(a) => commands::flow(a),
        Command::Denoise(a) => commands::denoise(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
