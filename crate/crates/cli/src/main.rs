//! `ctrlgs` — command-line pipeline for the splatting engine: synthetic
//! scene generation, flow estimation, temporal segmentation, training,
//! rendering, and evaluation.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ctrlgs", version, about = "Desk-scale differentiable 4D Gaussian splatting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with exact ground truth.
    Gen(commands::GenArgs),
    /// Estimate per-frame-pair flow magnitudes with the block-matching proxy.
    Flow(commands::FlowArgs),
    /// Construct temporal windows (equal, n-highest, or greedy threshold).
    Segment(commands::SegmentArgs),
    /// Train a model from a manifest and a window set.
    Train(commands::TrainArgs),
    /// Render a checkpoint at given timestamps.
    Render(commands::RenderArgs),
    /// Evaluate a checkpoint against a manifest split.
    Eval(commands::EvalArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Flow(args) => commands::flow(args),
        Command::Segment(args) => commands::segment(args),
        Command::Train(args) => commands::train(args),
        Command::Render(args) => commands::render(args),
        Command::Eval(args) => commands::eval(args),
    };
    if let Err(err) = result {
        // One machine-parseable line: class in brackets, then the message.
        let msg = err.to_string().replace('\n', " ");
        eprintln!("ctrlgs: error[{}]: {}", err.class(), msg);
        std::process::exit(1);
    }
}
