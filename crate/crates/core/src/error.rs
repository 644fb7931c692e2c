//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building or running a detector.
#[derive(Debug, Error)]
pub enum Error {
    // The cause is baked into the message rather than exposed via source()
    // so chain-printing error reporters do not repeat it.
    #[error("failed to read {path}: {cause}")]
    Io {
        path: PathBuf,
        cause: std::io::Error,
    },

    #[error("failed to decode audio {path}: {detail}")]
    Audio { path: PathBuf, detail: String },

    #[error("audio must be mono, {path} has {channels} channels")]
    NotMono { path: PathBuf, channels: u16 },

    #[error("failed to parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("unknown event {event:?}; manifest declares {known:?}")]
    UnknownEvent { event: String, known: Vec<String> },

    #[error("clip too short: {samples} samples, need at least {needed} for one analysis window")]
    ClipTooShort { samples: usize, needed: usize },

    #[error("cannot pool features over an empty segment")]
    EmptySegment,

    #[error("bag {0:?} has no instances")]
    EmptyBag(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need both positive and negative examples: {0}")]
    SingleClass(String),

    #[error("need at least {needed} frames to fit {components} components, got {got}")]
    TooFewFrames {
        needed: usize,
        components: usize,
        got: usize,
    },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("model file {path}: {detail}")]
    Model { path: PathBuf, detail: String },

    #[error("refusing to overwrite {0} (pass --force to allow)")]
    WouldOverwrite(PathBuf),
}

impl Error {
    /// Wraps an I/O error with the path that produced it.
    pub fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }
}
