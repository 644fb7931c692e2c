//! Weakly supervised acoustic event detection.
//!
//! Recordings carry only clip-level tags saying which event classes occur
//! somewhere inside them. This crate builds detectors that nevertheless
//! score and localize events at one-second resolution: clips are segmented,
//! each segment is summarized against a universal background model, and the
//! segment/clip label mismatch is resolved by multiple-instance learners.

pub mod audio;
pub mod bags;
pub mod bpmil;
pub mod detector;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod misvm;
pub mod model;
pub mod scale;
pub mod synth;

pub use error::{Error, Result};
