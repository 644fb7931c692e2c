//! `train`: fit one event's detector from weak labels only.

use std::path::PathBuf;

use anyhow::Result;
use weakaed::bags::bags_for_event;
use weakaed::detector::{train_detector, TrainInfo};
use weakaed::model::{load_ubm, save_model, DetectorModel, ModelFile};

use crate::commands::{guard_overwrite, obtain_features, Corpus};
use crate::config::{FeatureArgs, LearnerArgs, PipelineConfig};

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Corpus manifest (JSON)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Background model
    #[arg(long)]
    pub ubm: PathBuf,
    /// Event to train a detector for
    #[arg(long)]
    pub event: String,
    /// Where to write the detector model
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub feature: FeatureArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Reuse cached features instead of re-extracting
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Cross-validation folds for automatic cost selection
    #[arg(long)]
    pub folds: Option<usize>,
    /// Overwrite an existing model file
    #[arg(long)]
    pub force: bool,
}

/// One line summarizing how training went.
pub fn log_train_info(info: &TrainInfo) {
    match info {
        TrainInfo::MiSvm {
            c,
            grid_auc,
            rounds,
            termination,
        } => {
            if let Some(grid) = grid_auc {
                for (cost, auc) in grid {
                    eprintln!("  cost {cost}: mean held-out AUC {auc:.4}");
                }
                eprintln!("selected C = {c}");
            }
            eprintln!("label imputation took {rounds} rounds ({termination:?})");
        }
        TrainInfo::BpMil {
            epochs_run,
            initial_divergence,
            final_divergence,
            converged,
            attempts,
            training_auc,
        } => {
            eprintln!(
                "trained {epochs_run} epochs ({} attempt{}): divergence {initial_divergence:.4} \
                 -> {final_divergence:.6}, converged: {converged}, training AUC {training_auc:.4}",
                attempts,
                if *attempts == 1 { "" } else { "s" },
            );
        }
    }
}

pub fn run(args: &TrainArgs, cfg: &PipelineConfig, seed: Option<u64>) -> Result<()> {
    guard_overwrite(&args.out, args.force)?;
    let corpus = Corpus::load(&args.manifest)?;
    let ubm = load_ubm(&args.ubm)?;
    let feature_cfg = args.feature.resolve(cfg, ubm.mfcc.clone())?;
    let seed = seed.unwrap_or(0);

    let features = obtain_features(args.features.as_deref(), &corpus, &ubm.gmm, &feature_cfg)?;
    let bags = bags_for_event(&features, &corpus.manifest, &args.event)?;
    let positives = bags.iter().filter(|b| b.positive).count();
    eprintln!(
        "training \"{}\" detector for event {:?} on {} bags ({} positive)",
        args.learner.learner.as_deref().unwrap_or("misvm"),
        args.event,
        bags.len(),
        positives
    );

    let folds = args.folds.or(cfg.folds).unwrap_or(4);
    let spec = args.learner.resolve(cfg, folds)?;
    let detector = train_detector(&bags, &spec, seed)?;
    log_train_info(&detector.info);

    save_model(
        &args.out,
        &ModelFile::Detector(DetectorModel {
            event: args.event.clone(),
            feature: feature_cfg,
            gmm: ubm.gmm,
            learner: spec,
            detector,
            seed,
        }),
    )?;
    eprintln!("wrote detector to {}", args.out.display());
    Ok(())
}
