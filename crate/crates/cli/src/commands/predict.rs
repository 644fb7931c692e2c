//! `predict`: score recordings with a trained detector.

use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;
use weakaed::model::load_detector;

use crate::commands::{guard_overwrite, obtain_features, write_json, Corpus};

#[derive(Debug, clap::Args)]
pub struct PredictArgs {
    /// Corpus manifest (JSON)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Detector model
    #[arg(long)]
    pub model: PathBuf,
    /// Where to write the scores JSON (omit for stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reuse cached features instead of re-extracting
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Overwrite an existing output file
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Serialize)]
pub struct BagScore {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Serialize)]
pub struct PredictReport {
    pub event: String,
    pub scores: Vec<BagScore>,
}

pub fn run(args: &PredictArgs) -> Result<()> {
    if let Some(out) = &args.out {
        guard_overwrite(out, args.force)?;
    }
    let corpus = Corpus::load(&args.manifest)?;
    let model = load_detector(&args.model)?;
    let features = obtain_features(
        args.features.as_deref(),
        &corpus,
        &model.gmm,
        &model.feature,
    )?;

    let scores = features
        .recordings
        .iter()
        .map(|rec| {
            Ok(BagScore {
                id: rec.clip_id.clone(),
                score: model.detector.score_bag(&rec.instances)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = PredictReport {
        event: model.event.clone(),
        scores,
    };

    match &args.out {
        Some(path) => {
            write_json(path, &report)?;
            eprintln!(
                "wrote {} bag scores for event {:?} to {}",
                report.scores.len(),
                report.event,
                path.display()
            );
        }
        None => {
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            print!("{text}");
        }
    }
    Ok(())
}
