//! Corpus manifests, clip segmentation, and bag construction.
//!
//! A recording is a bag; its one-second segments are the instances. A bag is
//! positive for an event when the clip-level tag list contains that event,
//! with no information about which segment is responsible. Optional strong
//! annotations (start/end times) are never used for training, only to score
//! localization.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dsp::{mfcc, MfccConfig};
use crate::error::{Error, Result};
use crate::gmm::{blend_adapted_means, f_from_posteriors, Gmm};

/// Half-open interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
}

impl TimeSpan {
    pub fn new(start: f64, end: f64) -> Self {
        TimeSpan { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Length of the intersection with another span.
    pub fn overlap(&self, other: &TimeSpan) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }
}

/// A clip-level annotation: where one event occurs in one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongAnnotation {
    pub event: String,
    pub start: f64,
    pub end: f64,
}

/// One recording in a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingEntry {
    pub id: String,
    /// Audio path, relative to the manifest location.
    pub path: String,
    /// Clip-level tags: which events occur somewhere in this recording.
    #[serde(default)]
    pub weak: Vec<String>,
    /// Optional within-clip event intervals, for evaluation only.
    #[serde(default)]
    pub strong: Vec<StrongAnnotation>,
}

impl RecordingEntry {
    /// Strong annotation intervals for one event.
    pub fn annotations_for(&self, event: &str) -> Vec<TimeSpan> {
        self.strong
            .iter()
            .filter(|a| a.event == event)
            .map(|a| TimeSpan::new(a.start, a.end))
            .collect()
    }

    pub fn tagged_with(&self, event: &str) -> bool {
        self.weak.iter().any(|e| e == event)
    }
}

/// A labeled corpus: the event vocabulary plus one entry per recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub events: Vec<String>,
    pub recordings: Vec<RecordingEntry>,
}

impl Manifest {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn has_event(&self, event: &str) -> bool {
        self.events.iter().any(|e| e == event)
    }

    pub fn recording(&self, id: &str) -> Option<&RecordingEntry> {
        self.recordings.iter().find(|r| r.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::Manifest("manifest declares no events".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.events {
            if e.is_empty() {
                return Err(Error::Manifest("empty event name".into()));
            }
            if !seen.insert(e.as_str()) {
                return Err(Error::Manifest(format!("duplicate event {e:?}")));
            }
        }
        let mut ids = HashSet::new();
        for rec in &self.recordings {
            if rec.id.is_empty() || rec.path.is_empty() {
                return Err(Error::Manifest(format!(
                    "recording with empty id or path (id {:?})",
                    rec.id
                )));
            }
            if !ids.insert(rec.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate recording id {:?}", rec.id)));
            }
            for tag in &rec.weak {
                if !self.has_event(tag) {
                    return Err(Error::Manifest(format!(
                        "recording {:?} is tagged with undeclared event {tag:?}",
                        rec.id
                    )));
                }
            }
            for ann in &rec.strong {
                if !self.has_event(&ann.event) {
                    return Err(Error::Manifest(format!(
                        "recording {:?} has a strong annotation for undeclared event {:?}",
                        rec.id, ann.event
                    )));
                }
                if !ann.start.is_finite()
                    || !ann.end.is_finite()
                    || ann.start < 0.0
                    || ann.end <= ann.start
                {
                    return Err(Error::Manifest(format!(
                        "recording {:?}: bad interval [{}, {}) for {:?}",
                        rec.id, ann.start, ann.end, ann.event
                    )));
                }
                if !rec.tagged_with(&ann.event) {
                    return Err(Error::Manifest(format!(
                        "recording {:?} has a strong annotation for {:?} without the clip tag",
                        rec.id, ann.event
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Cuts `[0, duration)` into fixed-length spans advancing by `hop`.
///
/// A clip shorter than one span becomes the single span `[0, duration)`.
/// Otherwise there are `floor((duration - len) / hop) + 1` spans and any
/// shorter remainder at the tail is dropped.
pub fn segment_spans(duration: f64, len: f64, hop: f64) -> Result<Vec<TimeSpan>> {
    if !duration.is_finite() || duration <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "clip duration must be positive, got {duration}"
        )));
    }
    if !(len > 0.0) || !(hop > 0.0) || hop > len {
        return Err(Error::InvalidConfig(format!(
            "need 0 < hop <= len, got len {len}, hop {hop}"
        )));
    }
    if duration < len {
        return Ok(vec![TimeSpan::new(0.0, duration)]);
    }
    // The epsilon keeps a count that is mathematically integral from being
    // truncated by floating-point noise.
    let count = ((duration - len) / hop + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let start = k as f64 * hop;
            TimeSpan::new(start, start + len)
        })
        .collect())
}

/// Marks each span positive when at least half of it is covered by the
/// union of the annotated intervals.
pub fn instance_truth(spans: &[TimeSpan], annotations: &[TimeSpan]) -> Vec<bool> {
    let merged = merge_spans(annotations);
    spans
        .iter()
        .map(|span| {
            let covered: f64 = merged.iter().map(|m| span.overlap(m)).sum();
            covered >= 0.5 * span.duration() - 1e-12
        })
        .collect()
}

/// Sorts and merges overlapping or touching spans into disjoint spans.
pub fn merge_spans(spans: &[TimeSpan]) -> Vec<TimeSpan> {
    let mut sorted: Vec<TimeSpan> = spans.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut merged: Vec<TimeSpan> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match merged.last_mut() {
            Some(last) if s.start <= last.end + 1e-9 => {
                last.end = last.end.max(s.end);
            }
            _ => merged.push(s),
        }
    }
    merged
}

/// Which segment summary the instances carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Average component posterior only.
    F,
    /// Average posterior concatenated with adapted component means.
    Fm,
}

impl FeatureMode {
    pub fn dim(&self, components: usize, mfcc_dim: usize) -> usize {
        match self {
            FeatureMode::F => components,
            FeatureMode::Fm => components + components * mfcc_dim,
        }
    }
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f" => Ok(FeatureMode::F),
            "fm" | "f+m" => Ok(FeatureMode::Fm),
            other => Err(Error::InvalidConfig(format!(
                "unknown feature mode {other:?}; expected \"f\" or \"fm\""
            ))),
        }
    }
}

impl std::fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureMode::F => "f",
            FeatureMode::Fm => "fm",
        })
    }
}

/// How clips are segmented and summarized into instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub mode: FeatureMode,
    /// Segment length in seconds.
    pub segment_len: f64,
    /// Segment hop in seconds.
    pub segment_hop: f64,
    /// Relevance factor for mean adaptation (only used in `Fm` mode).
    pub relevance: f64,
    pub mfcc: MfccConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            mode: FeatureMode::F,
            segment_len: 1.0,
            segment_hop: 0.5,
            relevance: 16.0,
            mfcc: MfccConfig::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.mfcc.validate()?;
        if !(self.segment_len > 0.0) || !(self.segment_hop > 0.0) {
            return Err(Error::InvalidConfig(
                "segment_len and segment_hop must be positive".into(),
            ));
        }
        if self.segment_hop > self.segment_len {
            return Err(Error::InvalidConfig(
                "segment_hop must not exceed segment_len".into(),
            ));
        }
        if !self.relevance.is_finite() || self.relevance < 0.0 {
            return Err(Error::InvalidConfig(
                "relevance must be finite and non-negative".into(),
            ));
        }
        if self.segment_len < self.mfcc.frame_len_s {
            return Err(Error::InvalidConfig(
                "segments must be at least one analysis window long".into(),
            ));
        }
        Ok(())
    }
}

/// Instance features for one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingFeatures {
    pub clip_id: String,
    pub duration: f64,
    pub spans: Vec<TimeSpan>,
    /// One feature vector per span.
    pub instances: Vec<Vec<f64>>,
}

/// Instance features for every usable recording of a corpus, with enough
/// metadata to detect mismatched reuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFeatures {
    pub mode: FeatureMode,
    pub components: usize,
    pub mfcc_dim: usize,
    pub segment_len: f64,
    pub segment_hop: f64,
    pub relevance: f64,
    pub recordings: Vec<RecordingFeatures>,
}

impl CorpusFeatures {
    pub fn instance_dim(&self) -> usize {
        self.mode.dim(self.components, self.mfcc_dim)
    }
}

/// A recording that could not be featurized and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecording {
    pub id: String,
    pub reason: String,
}

/// Extraction result: features plus the recordings that had to be skipped.
#[derive(Debug, Clone)]
pub struct CorpusExtraction {
    pub corpus: CorpusFeatures,
    pub skipped: Vec<SkippedRecording>,
}

/// Featurizes one clip: segment it and summarize each segment against the
/// background model. Frame posteriors are computed once per clip and shared
/// by the overlapping segments.
pub fn extract_clip_features(
    clip: &AudioClip,
    gmm: &Gmm,
    cfg: &FeatureConfig,
) -> Result<RecordingFeatures> {
    cfg.validate()?;
    let clip = clip.resampled(cfg.mfcc.sample_rate)?;
    let frames = mfcc(&clip, &cfg.mfcc)?;
    if frames.dim() != gmm.dim() {
        return Err(Error::DimensionMismatch {
            expected: gmm.dim(),
            got: frames.dim(),
        });
    }
    let duration = clip.duration();
    let spans = segment_spans(duration, cfg.segment_len, cfg.segment_hop)?;
    let centers: Vec<f64> = (0..frames.len()).map(|k| cfg.mfcc.frame_center(k)).collect();

    let scorer = gmm.scorer();
    let mut posteriors = Vec::with_capacity(frames.len());
    for x in &frames.frames {
        let mut p = vec![0.0; gmm.components()];
        scorer.posterior_into(x, &mut p);
        posteriors.push(p);
    }

    let mut kept_spans = Vec::with_capacity(spans.len());
    let mut instances = Vec::with_capacity(spans.len());
    for span in spans {
        // Frame centers are sorted, so each span is a contiguous index range.
        let lo = centers.partition_point(|&t| t < span.start);
        let hi = centers.partition_point(|&t| t < span.end);
        if lo == hi {
            continue; // segment shorter than one frame hop; nothing to pool
        }
        let mut feat = f_from_posteriors(gmm.components(), &posteriors[lo..hi]);
        if cfg.mode == FeatureMode::Fm {
            let mut occ = vec![0.0; gmm.components()];
            let mut weighted = vec![vec![0.0; gmm.dim()]; gmm.components()];
            for (post, x) in posteriors[lo..hi].iter().zip(&frames.frames[lo..hi]) {
                for k in 0..gmm.components() {
                    let r = post[k];
                    occ[k] += r;
                    for d in 0..gmm.dim() {
                        weighted[k][d] += r * x[d];
                    }
                }
            }
            feat.extend(blend_adapted_means(gmm, &occ, &weighted, cfg.relevance));
        }
        kept_spans.push(span);
        instances.push(feat);
    }
    if instances.is_empty() {
        return Err(Error::EmptySegment);
    }
    Ok(RecordingFeatures {
        clip_id: clip.id.clone(),
        duration,
        spans: kept_spans,
        instances,
    })
}

/// Featurizes every recording in a manifest. Recordings whose audio cannot
/// be read or is too short are skipped and reported, not fatal; an entirely
/// unusable corpus is an error.
pub fn extract_corpus(
    manifest: &Manifest,
    base_dir: impl AsRef<Path>,
    gmm: &Gmm,
    cfg: &FeatureConfig,
) -> Result<CorpusExtraction> {
    cfg.validate()?;
    let base_dir = base_dir.as_ref();
    let mut recordings = Vec::with_capacity(manifest.recordings.len());
    let mut skipped = Vec::new();
    for entry in &manifest.recordings {
        let path = base_dir.join(&entry.path);
        let result = AudioClip::from_wav(&path).and_then(|mut clip| {
            clip.id = entry.id.clone();
            extract_clip_features(&clip, gmm, cfg)
        });
        match result {
            Ok(features) => recordings.push(features),
            Err(e @ (Error::InvalidConfig(_) | Error::DimensionMismatch { .. })) => {
                // Configuration problems affect every recording; fail fast.
                return Err(e);
            }
            Err(e) => skipped.push(SkippedRecording {
                id: entry.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    if recordings.is_empty() {
        return Err(Error::Manifest(format!(
            "no recording in the manifest could be featurized ({} skipped)",
            skipped.len()
        )));
    }
    Ok(CorpusExtraction {
        corpus: CorpusFeatures {
            mode: cfg.mode,
            components: gmm.components(),
            mfcc_dim: gmm.dim(),
            segment_len: cfg.segment_len,
            segment_hop: cfg.segment_hop,
            relevance: cfg.relevance,
            recordings,
        },
        skipped,
    })
}

/// A labeled bag of instances for one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bag {
    pub clip_id: String,
    pub positive: bool,
    pub spans: Vec<TimeSpan>,
    pub instances: Vec<Vec<f64>>,
}

impl Bag {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.instances.first().map_or(0, Vec::len)
    }

    /// Bag label as the sign convention used by the margin learner.
    pub fn label_sign(&self) -> f64 {
        if self.positive {
            1.0
        } else {
            -1.0
        }
    }
}

/// Labels extracted features against one event's clip tags.
pub fn bags_for_event(
    corpus: &CorpusFeatures,
    manifest: &Manifest,
    event: &str,
) -> Result<Vec<Bag>> {
    if !manifest.has_event(event) {
        return Err(Error::UnknownEvent {
            event: event.to_string(),
            known: manifest.events.clone(),
        });
    }
    let mut bags = Vec::with_capacity(corpus.recordings.len());
    for rec in &corpus.recordings {
        let entry = manifest.recording(&rec.clip_id).ok_or_else(|| {
            Error::Manifest(format!(
                "features reference recording {:?} which the manifest does not declare",
                rec.clip_id
            ))
        })?;
        bags.push(Bag {
            clip_id: rec.clip_id.clone(),
            positive: entry.tagged_with(event),
            spans: rec.spans.clone(),
            instances: rec.instances.clone(),
        });
    }
    Ok(bags)
}

/// Convenience: featurize a corpus and label it for one event in one call.
pub fn build_bags(
    manifest: &Manifest,
    base_dir: impl AsRef<Path>,
    gmm: &Gmm,
    cfg: &FeatureConfig,
    event: &str,
) -> Result<(Vec<Bag>, Vec<SkippedRecording>)> {
    let extraction = extract_corpus(manifest, base_dir, gmm, cfg)?;
    let bags = bags_for_event(&extraction.corpus, manifest, event)?;
    Ok((bags, extraction.skipped))
}

/// Span-level ground truth for one event across a featurized corpus, in
/// corpus order. Returns `None` when some positive recording has no strong
/// annotations for the event, because instance-level scoring would then be
/// meaningless.
pub fn event_instance_truth(
    corpus: &CorpusFeatures,
    manifest: &Manifest,
    event: &str,
) -> Result<Option<Vec<Vec<bool>>>> {
    if !manifest.has_event(event) {
        return Err(Error::UnknownEvent {
            event: event.to_string(),
            known: manifest.events.clone(),
        });
    }
    let mut truths = Vec::with_capacity(corpus.recordings.len());
    for rec in &corpus.recordings {
        let entry = manifest.recording(&rec.clip_id).ok_or_else(|| {
            Error::Manifest(format!(
                "features reference recording {:?} which the manifest does not declare",
                rec.clip_id
            ))
        })?;
        let annotations = entry.annotations_for(event);
        if annotations.is_empty() && entry.tagged_with(event) {
            return Ok(None);
        }
        truths.push(instance_truth(&rec.spans, &annotations));
    }
    Ok(Some(truths))
}
