//! `synth`: render a labeled synthetic corpus.

use std::path::PathBuf;

use anyhow::Result;
use weakaed::synth::gen_audio_corpus;

use crate::commands::guard_overwrite;
use crate::config::PipelineConfig;

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Directory to write the clips and manifest.json into
    #[arg(long)]
    pub out: PathBuf,
    /// Number of clips to render
    #[arg(long)]
    pub clips: Option<usize>,
    /// Event level relative to its band's noise floor, in dB
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Most event occurrences a single clip may contain
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Overwrite an existing corpus
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &SynthArgs, cfg: &PipelineConfig, seed: Option<u64>) -> Result<()> {
    let mut synth = cfg.synth.clone().unwrap_or_default();
    if let Some(clips) = args.clips {
        synth.clips = clips;
    }
    if let Some(snr) = args.snr_db {
        synth.snr_db = snr;
    }
    if let Some(max) = args.max_events {
        synth.events_per_clip.1 = max;
    }
    if let Some(seed) = seed {
        synth.seed = seed;
    }

    let manifest_path = args.out.join("manifest.json");
    guard_overwrite(&manifest_path, args.force)?;
    let manifest = gen_audio_corpus(&synth, &args.out)?;
    manifest.save(&manifest_path)?;

    let positives = manifest
        .recordings
        .iter()
        .filter(|r| !r.weak.is_empty())
        .count();
    eprintln!(
        "wrote {} clips ({} with events) and manifest to {}",
        manifest.recordings.len(),
        positives,
        args.out.display()
    );
    Ok(())
}
