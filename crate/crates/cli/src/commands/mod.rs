//! Subcommand implementations and the plumbing they share.

pub mod evaluate;
pub mod extract;
pub mod localize;
pub mod predict;
pub mod synth;
pub mod train;
pub mod train_ubm;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use weakaed::bags::{extract_corpus, CorpusFeatures, FeatureConfig, Manifest, SkippedRecording};
use weakaed::gmm::Gmm;
use weakaed::model::load_features;
use weakaed::Error;

/// Refuses to write over an existing file unless forced.
pub fn guard_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::WouldOverwrite(path.to_path_buf()).into());
    }
    Ok(())
}

/// Loads a manifest and remembers the directory its recording paths are
/// relative to.
pub struct Corpus {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
}

impl Corpus {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = Manifest::from_path(manifest_path)?;
        let base_dir = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Corpus { manifest, base_dir })
    }
}

/// Verifies that cached features were extracted with the settings this run
/// wants; any mismatch is a hard error rather than a silently wrong answer.
pub fn check_features_compat(
    features: &CorpusFeatures,
    gmm: &Gmm,
    cfg: &FeatureConfig,
) -> Result<()> {
    anyhow::ensure!(
        features.mode == cfg.mode,
        "features were extracted in mode \"{}\" but this run wants \"{}\"",
        features.mode,
        cfg.mode
    );
    anyhow::ensure!(
        features.components == gmm.components() && features.mfcc_dim == gmm.dim(),
        "features were extracted against a {}-component, {}-dimensional background \
         model; this one has {} components over {} dimensions",
        features.components,
        features.mfcc_dim,
        gmm.components(),
        gmm.dim()
    );
    anyhow::ensure!(
        features.segment_len == cfg.segment_len && features.segment_hop == cfg.segment_hop,
        "features use segments of {} s every {} s but this run wants {} s every {} s",
        features.segment_len,
        features.segment_hop,
        cfg.segment_len,
        cfg.segment_hop
    );
    if cfg.mode == weakaed::bags::FeatureMode::Fm {
        anyhow::ensure!(
            features.relevance == cfg.relevance,
            "features were adapted with relevance {} but this run wants {}",
            features.relevance,
            cfg.relevance
        );
    }
    Ok(())
}

/// Instance features for a corpus: from the cache when one is given (after
/// checking it matches), otherwise extracted fresh.
pub fn obtain_features(
    cache: Option<&Path>,
    corpus: &Corpus,
    gmm: &Gmm,
    cfg: &FeatureConfig,
) -> Result<CorpusFeatures> {
    match cache {
        Some(path) => {
            let features = load_features(path)?;
            check_features_compat(&features, gmm, cfg)
                .with_context(|| format!("cached features {} are unusable here", path.display()))?;
            Ok(features)
        }
        None => {
            let extraction = extract_corpus(&corpus.manifest, &corpus.base_dir, gmm, cfg)?;
            warn_skipped(&extraction.skipped);
            Ok(extraction.corpus)
        }
    }
}

pub fn warn_skipped(skipped: &[SkippedRecording]) {
    for s in skipped {
        eprintln!("warning: skipping recording {}: {}", s.id, s.reason);
    }
}

/// Writes a report as pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("failed to encode {}", path.display()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}
