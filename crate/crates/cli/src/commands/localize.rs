//! `localize`: emit detected event intervals per recording.

use std::path::PathBuf;

use anyhow::Result;
use serde::Serialize;
use weakaed::eval::localize;
use weakaed::model::load_detector;

use crate::commands::{guard_overwrite, obtain_features, write_json, Corpus};

#[derive(Debug, clap::Args)]
pub struct LocalizeArgs {
    /// Corpus manifest (JSON)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Detector model
    #[arg(long)]
    pub model: PathBuf,
    /// Instance score at or above which a segment counts as detected
    #[arg(long)]
    pub threshold: f64,
    /// Where to write the intervals JSON (omit for stdout)
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
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Serialize)]
pub struct RecordingIntervals {
    pub id: String,
    pub intervals: Vec<Interval>,
}

#[derive(Debug, Serialize)]
pub struct LocalizeReport {
    pub event: String,
    pub threshold: f64,
    pub recordings: Vec<RecordingIntervals>,
}

pub fn run(args: &LocalizeArgs) -> Result<()> {
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

    let recordings = features
        .recordings
        .iter()
        .map(|rec| {
            let scores = model.detector.score_instances(&rec.instances)?;
            let spans = localize(&rec.spans, &scores, args.threshold)?;
            Ok(RecordingIntervals {
                id: rec.clip_id.clone(),
                intervals: spans
                    .into_iter()
                    .map(|s| Interval {
                        start: s.start,
                        end: s.end,
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let detected = recordings.iter().filter(|r| !r.intervals.is_empty()).count();
    let report = LocalizeReport {
        event: model.event.clone(),
        threshold: args.threshold,
        recordings,
    };

    match &args.out {
        Some(path) => {
            write_json(path, &report)?;
            eprintln!(
                "event {:?} detected in {detected} of {} recordings at threshold {}; wrote {}",
                report.event,
                report.recordings.len(),
                args.threshold,
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
