//! `extract-features`: cache instance features for reuse by later commands.

use std::path::PathBuf;

use anyhow::Result;
use weakaed::bags::extract_corpus;
use weakaed::model::{load_ubm, save_model, ModelFile};

use crate::commands::{guard_overwrite, warn_skipped, Corpus};
use crate::config::{FeatureArgs, PipelineConfig};

#[derive(Debug, clap::Args)]
pub struct ExtractArgs {
    /// Corpus manifest (JSON)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Background model to featurize against
    #[arg(long)]
    pub ubm: PathBuf,
    /// Where to write the feature cache
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub feature: FeatureArgs,
    /// Overwrite an existing cache file
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &ExtractArgs, cfg: &PipelineConfig) -> Result<()> {
    guard_overwrite(&args.out, args.force)?;
    let corpus = Corpus::load(&args.manifest)?;
    let ubm = load_ubm(&args.ubm)?;
    let feature_cfg = args.feature.resolve(cfg, ubm.mfcc.clone())?;

    let extraction = extract_corpus(&corpus.manifest, &corpus.base_dir, &ubm.gmm, &feature_cfg)?;
    warn_skipped(&extraction.skipped);
    let features = extraction.corpus;
    eprintln!(
        "extracted {}-dimensional \"{}\" instances for {} recordings",
        features.instance_dim(),
        features.mode,
        features.recordings.len()
    );

    save_model(&args.out, &ModelFile::Features(features))?;
    eprintln!("wrote feature cache to {}", args.out.display());
    Ok(())
}
