//! `evaluate`: cross-validated evaluation over a corpus's events.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use weakaed::bags::{bags_for_event, event_instance_truth};
use weakaed::eval::{assemble_report, kfold_eval_event, EventEval, FeatureSummary, KfoldConfig};
use weakaed::model::load_ubm;
use weakaed::Error;

use crate::commands::{guard_overwrite, obtain_features, write_json, Corpus};
use crate::config::{FeatureArgs, LearnerArgs, PipelineConfig};

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Corpus manifest (JSON)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Background model
    #[arg(long)]
    pub ubm: PathBuf,
    /// Where to write the report JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Events to evaluate (defaults to every event in the manifest)
    #[arg(long, value_delimiter = ',')]
    pub events: Vec<String>,
    /// Cross-validation folds
    #[arg(long)]
    pub folds: Option<usize>,
    /// Directory for per-event ROC curve CSVs
    #[arg(long)]
    pub roc_out: Option<PathBuf>,
    /// Worker threads across events (1 = sequential)
    #[arg(long, env = "WEAKAED_JOBS")]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub feature: FeatureArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Reuse cached features instead of re-extracting
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Overwrite existing output files
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &EvaluateArgs, cfg: &PipelineConfig, seed: Option<u64>) -> Result<()> {
    guard_overwrite(&args.out, args.force)?;
    let corpus = Corpus::load(&args.manifest)?;
    let ubm = load_ubm(&args.ubm)?;
    let feature_cfg = args.feature.resolve(cfg, ubm.mfcc.clone())?;
    let kfold = KfoldConfig {
        folds: args.folds.or(cfg.folds).unwrap_or(4),
        seed: seed.unwrap_or(0),
    };
    let spec = args.learner.resolve(cfg, kfold.folds)?;

    let events: Vec<String> = if args.events.is_empty() {
        corpus.manifest.events.clone()
    } else {
        for event in &args.events {
            if !corpus.manifest.events.contains(event) {
                return Err(Error::UnknownEvent {
                    event: event.clone(),
                    known: corpus.manifest.events.clone(),
                }
                .into());
            }
        }
        args.events.clone()
    };

    let features = obtain_features(args.features.as_deref(), &corpus, &ubm.gmm, &feature_cfg)?;
    eprintln!(
        "evaluating {} event(s) on {} recordings with {}-fold rotation ({})",
        events.len(),
        features.recordings.len(),
        kfold.folds,
        spec.name()
    );

    // Each event's evaluation is seeded independently of scheduling, so any
    // worker count produces the same report.
    let jobs = args.jobs.unwrap_or(1).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("failed to start worker pool")?;
    let evals: Vec<EventEval> = pool.install(|| {
        events
            .par_iter()
            .map(|event| {
                let bags = bags_for_event(&features, &corpus.manifest, event)?;
                let truth = event_instance_truth(&features, &corpus.manifest, event)?;
                kfold_eval_event(event, &bags, truth.as_deref(), &spec, &kfold)
            })
            .collect::<weakaed::Result<Vec<_>>>()
    })?;

    let report = assemble_report(&spec, &FeatureSummary::from(&features), &kfold, &evals)?;

    println!("event        bags  positive  bag AUC  instance AUC");
    for event in &report.events {
        println!(
            "{:<12} {:>4}  {:>8}  {:>7.4}  {}",
            event.event,
            event.bags,
            event.positives,
            event.bag_auc,
            event
                .instance_auc
                .map_or_else(|| "      n/a".to_string(), |a| format!("{a:>12.4}")),
        );
    }
    println!(
        "{:<12} {:>4}  {:>8}  {:>7.4}  {}",
        "mean",
        "",
        "",
        report.mean_bag_auc,
        report
            .mean_instance_auc
            .map_or_else(|| "      n/a".to_string(), |a| format!("{a:>12.4}")),
    );

    write_json(&args.out, &report)?;
    eprintln!("wrote report to {}", args.out.display());

    if let Some(roc_dir) = &args.roc_out {
        std::fs::create_dir_all(roc_dir).map_err(|e| Error::io(roc_dir, e))?;
        for eval in &evals {
            write_roc_csv(
                &roc_dir.join(format!("{}_bag_roc.csv", eval.event)),
                &eval.bag_roc.curve,
                args.force,
            )?;
            if let Some(roc) = &eval.instance_roc {
                write_roc_csv(
                    &roc_dir.join(format!("{}_instance_roc.csv", eval.event)),
                    &roc.curve,
                    args.force,
                )?;
            }
        }
        eprintln!("wrote ROC curves to {}", roc_dir.display());
    }
    Ok(())
}

fn write_roc_csv(path: &Path, curve: &[weakaed::eval::RocPoint], force: bool) -> Result<()> {
    guard_overwrite(path, force)?;
    let mut text = String::from("threshold,fpr,tpr\n");
    for p in curve {
        text.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}
