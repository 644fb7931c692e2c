//! Audio event detection from weak labels: synthesize corpora, fit
//! background models, train instance-level detectors from recording-level
//! tags, and evaluate them with cross-validated ranking metrics.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::commands::{evaluate, extract, localize, predict, synth, train, train_ubm};
use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(
    name = "weakaed",
    version,
    about = "Detect and localize audio events using only recording-level labels"
)]
struct Cli {
    /// Seed for every random choice this invocation makes
    #[arg(long, global = true, env = "WEAKAED_SEED")]
    seed: Option<u64>,
    /// TOML settings file supplying defaults for omitted flags
    #[arg(long, global = true, env = "WEAKAED_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic labeled corpus of WAV clips
    Synth(synth::SynthArgs),
    /// Fit the background model on a corpus's pooled analysis frames
    TrainUbm(train_ubm::TrainUbmArgs),
    /// Cache instance features for reuse by later commands
    ExtractFeatures(extract::ExtractArgs),
    /// Train one event's detector from weak labels
    Train(train::TrainArgs),
    /// Score recordings with a trained detector
    Predict(predict::PredictArgs),
    /// Emit detected event intervals per recording
    Localize(localize::LocalizeArgs),
    /// Cross-validated evaluation over a corpus's events
    Evaluate(evaluate::EvaluateArgs),
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::from_path(path)?,
        None => PipelineConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed);
    match &cli.command {
        Command::Synth(args) => synth::run(args, &cfg, seed),
        Command::TrainUbm(args) => train_ubm::run(args, &cfg, seed),
        Command::ExtractFeatures(args) => extract::run(args, &cfg),
        Command::Train(args) => train::run(args, &cfg, seed),
        Command::Predict(args) => predict::run(args),
        Command::Localize(args) => localize::run(args),
        Command::Evaluate(args) => evaluate::run(args, &cfg, seed),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
