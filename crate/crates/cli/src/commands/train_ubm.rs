//! `train-ubm`: fit the background model on a corpus's pooled frames.

use std::path::PathBuf;

use anyhow::{Context, Result};
use weakaed::audio::AudioClip;
use weakaed::dsp::{mfcc, MfccConfig};
use weakaed::gmm::train_ubm;
use weakaed::model::{save_model, ModelFile, UbmModel};

use crate::commands::{guard_overwrite, Corpus};
use crate::config::PipelineConfig;

#[derive(Debug, clap::Args)]
pub struct TrainUbmArgs {
    /// Corpus manifest (JSON)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the background model
    #[arg(long)]
    pub out: PathBuf,
    /// Mixture components
    #[arg(long, env = "WEAKAED_COMPONENTS")]
    pub components: Option<usize>,
    /// Overwrite an existing model file
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &TrainUbmArgs, cfg: &PipelineConfig, seed: Option<u64>) -> Result<()> {
    guard_overwrite(&args.out, args.force)?;
    let corpus = Corpus::load(&args.manifest)?;
    let mfcc_cfg = cfg.mfcc.clone().unwrap_or_else(MfccConfig::default);
    let seed = seed.unwrap_or(0);

    // Pool analysis frames across every readable recording; a handful of
    // bad files should not abort background-model training.
    let mut frames = Vec::new();
    let mut used = 0usize;
    for entry in &corpus.manifest.recordings {
        let path = corpus.base_dir.join(&entry.path);
        let result = AudioClip::from_wav(&path)
            .and_then(|clip| clip.resampled(mfcc_cfg.sample_rate))
            .and_then(|clip| mfcc(&clip, &mfcc_cfg));
        match result {
            Ok(matrix) => {
                frames.extend(matrix.frames);
                used += 1;
            }
            Err(e) => eprintln!("warning: skipping recording {}: {e}", entry.id),
        }
    }
    anyhow::ensure!(
        !frames.is_empty(),
        "no usable audio in {}",
        args.manifest.display()
    );
    eprintln!(
        "pooled {} frames from {used} of {} recordings",
        frames.len(),
        corpus.manifest.recordings.len()
    );

    let ubm_cfg = cfg.ubm_config(args.components, seed);
    let training = train_ubm(&frames, &ubm_cfg).context("background model training failed")?;
    let final_ll = *training
        .avg_log_likelihood
        .last()
        .expect("training always records at least one iteration");
    eprintln!(
        "fit {} components on {} frames in {} iterations (converged: {}, avg log-likelihood {:.4})",
        training.gmm.components(),
        training.frames_used,
        training.avg_log_likelihood.len(),
        training.converged,
        final_ll
    );

    save_model(
        &args.out,
        &ModelFile::Ubm(UbmModel {
            gmm: training.gmm,
            mfcc: mfcc_cfg,
            frames_used: training.frames_used,
            converged: training.converged,
            avg_log_likelihood: final_ll,
            seed,
        }),
    )?;
    eprintln!("wrote background model to {}", args.out.display());
    Ok(())
}
