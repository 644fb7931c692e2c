//! Versioned on-disk container for trained models and cached features.
//!
//! Every artifact this crate writes starts with a fixed magic and a format
//! version, so stale or foreign files fail fast with a message naming the
//! file instead of deserializing into garbage. The payload itself is a
//! compact binary encoding; loaders check that the file holds the expected
//! kind of payload and say what they found otherwise.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bags::{CorpusFeatures, FeatureConfig};
use crate::detector::{LearnerSpec, TrainedDetector};
use crate::dsp::MfccConfig;
use crate::error::{Error, Result};
use crate::gmm::Gmm;

/// File signature for every artifact written by this crate.
pub const MODEL_MAGIC: [u8; 4] = *b"AEDM";
/// Current container format version.
pub const MODEL_VERSION: u32 = 1;

/// A trained background model plus the analysis settings it was fit under.
///
/// Feature extraction must replay the exact same front end the background
/// model saw, so the analysis configuration travels with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UbmModel {
    pub gmm: Gmm,
    pub mfcc: MfccConfig,
    pub frames_used: usize,
    pub converged: bool,
    /// Final training average log-likelihood per frame.
    pub avg_log_likelihood: f64,
    pub seed: u64,
}

/// A trained event detector bundled with everything prediction needs:
/// the front-end settings, the background model that maps frames to
/// instance features, and the scored decision function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub event: String,
    pub feature: FeatureConfig,
    pub gmm: Gmm,
    pub learner: LearnerSpec,
    pub detector: TrainedDetector,
    pub seed: u64,
}

/// What a container file can hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelFile {
    Ubm(UbmModel),
    Detector(DetectorModel),
    Features(CorpusFeatures),
}

impl ModelFile {
    fn kind(&self) -> &'static str {
        match self {
            ModelFile::Ubm(_) => "background model",
            ModelFile::Detector(_) => "detector",
            ModelFile::Features(_) => "extracted features",
        }
    }
}

/// Writes a container file (magic, version, payload).
pub fn save_model(path: impl AsRef<Path>, model: &ModelFile) -> Result<()> {
    let path = path.as_ref();
    let payload = bincode::serialize(model).map_err(|e| Error::Model {
        path: path.to_path_buf(),
        detail: format!("failed to encode: {e}"),
    })?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&MODEL_MAGIC)
        .and_then(|_| file.write_all(&MODEL_VERSION.to_le_bytes()))
        .and_then(|_| file.write_all(&payload))
        .map_err(|e| Error::io(path, e))
}

/// Reads a container file, checking magic and version before decoding.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 8];
    file.read_exact(&mut header).map_err(|_| Error::Model {
        path: path.to_path_buf(),
        detail: "file too short to be a model container".into(),
    })?;
    if header[..4] != MODEL_MAGIC {
        return Err(Error::Model {
            path: path.to_path_buf(),
            detail: "not a model container (bad signature)".into(),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::Model {
            path: path.to_path_buf(),
            detail: format!(
                "unsupported container version {version}, this build reads version {MODEL_VERSION}"
            ),
        });
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    bincode::deserialize(&payload).map_err(|e| Error::Model {
        path: path.to_path_buf(),
        detail: format!("failed to decode payload: {e}"),
    })
}

/// Loads a container and insists it holds a background model.
pub fn load_ubm(path: impl AsRef<Path>) -> Result<UbmModel> {
    let path = path.as_ref();
    match load_model(path)? {
        ModelFile::Ubm(m) => Ok(m),
        other => Err(Error::Model {
            path: path.to_path_buf(),
            detail: format!("expected a background model, found {}", other.kind()),
        }),
    }
}

/// Loads a container and insists it holds a detector.
pub fn load_detector(path: impl AsRef<Path>) -> Result<DetectorModel> {
    let path = path.as_ref();
    match load_model(path)? {
        ModelFile::Detector(m) => Ok(m),
        other => Err(Error::Model {
            path: path.to_path_buf(),
            detail: format!("expected a detector, found {}", other.kind()),
        }),
    }
}

/// Loads a container and insists it holds extracted features.
pub fn load_features(path: impl AsRef<Path>) -> Result<CorpusFeatures> {
    let path = path.as_ref();
    match load_model(path)? {
        ModelFile::Features(f) => Ok(f),
        other => Err(Error::Model {
            path: path.to_path_buf(),
            detail: format!("expected extracted features, found {}", other.kind()),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bags::{FeatureMode, RecordingFeatures, TimeSpan};
    use crate::detector::train_detector;
    use crate::synth::{gen_feature_bags, FeatureBagConfig};

    fn sample_gmm() -> Gmm {
        Gmm::new(
            vec![0.25, 0.75],
            vec![vec![0.0, 1.0], vec![2.0, -1.0]],
            vec![vec![1.0, 0.5], vec![0.25, 2.0]],
        )
        .unwrap()
    }

    fn sample_features() -> CorpusFeatures {
        CorpusFeatures {
            mode: FeatureMode::F,
            components: 2,
            mfcc_dim: 21,
            segment_len: 1.0,
            segment_hop: 0.5,
            relevance: 16.0,
            recordings: vec![RecordingFeatures {
                clip_id: "clip_000".into(),
                duration: 2.0,
                spans: vec![TimeSpan::new(0.0, 1.0), TimeSpan::new(0.5, 1.5)],
                instances: vec![vec![0.25, 0.75], vec![0.5, 0.5]],
            }],
        }
    }

    #[test]
    fn ubm_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ubm.bin");
        let model = UbmModel {
            gmm: sample_gmm(),
            mfcc: MfccConfig::default(),
            frames_used: 12345,
            converged: true,
            avg_log_likelihood: -17.25,
            seed: 42,
        };
        save_model(&path, &ModelFile::Ubm(model.clone())).unwrap();
        let loaded = load_ubm(&path).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn detector_round_trips_with_identical_scores() {
        let (bags, _) = gen_feature_bags(&FeatureBagConfig::default()).unwrap();
        let detector =
            train_detector(&bags, &LearnerSpec::misvm_default(), 7).unwrap();
        let model = DetectorModel {
            event: "tone".into(),
            feature: FeatureConfig::default(),
            gmm: sample_gmm(),
            learner: LearnerSpec::misvm_default(),
            detector,
        seed: 7,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.bin");
        save_model(&path, &ModelFile::Detector(model.clone())).unwrap();
        let loaded = load_detector(&path).unwrap();
        for bag in &bags {
            let a = model.detector.score_bag(&bag.instances).unwrap();
            let b = loaded.detector.score_bag(&bag.instances).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(loaded.event, "tone");
    }

    #[test]
    fn features_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.bin");
        let features = sample_features();
        save_model(&path, &ModelFile::Features(features.clone())).unwrap();
        assert_eq!(load_features(&path).unwrap(), features);
    }

    #[test]
    fn saved_files_are_byte_identical_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        let model = ModelFile::Features(sample_features());
        save_model(&a, &model).unwrap();
        save_model(&b, &model).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn wrong_kind_is_reported_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.bin");
        save_model(&path, &ModelFile::Features(sample_features())).unwrap();
        let err = load_detector(&path).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("expected a detector") && msg.contains("extracted features"),
            "unhelpful message: {msg}"
        );
    }

    #[test]
    fn foreign_and_truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let garbage = dir.path().join("garbage.bin");
        std::fs::write(&garbage, b"PK\x03\x04 definitely a zip").unwrap();
        assert!(matches!(
            load_model(&garbage),
            Err(Error::Model { .. })
        ));

        let short = dir.path().join("short.bin");
        std::fs::write(&short, b"AE").unwrap();
        assert!(matches!(load_model(&short), Err(Error::Model { .. })));
    }

    #[test]
    fn future_versions_are_refused_with_both_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("future.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MODEL_MAGIC);
        bytes.extend_from_slice(&99u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 16]);
        std::fs::write(&path, bytes).unwrap();
        let msg = load_model(&path).unwrap_err().to_string();
        assert!(msg.contains("99") && msg.contains('1'), "{msg}");
    }
}
