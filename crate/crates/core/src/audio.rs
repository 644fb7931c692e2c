//! WAV ingest, sample-rate conversion, and WAV export.
//!
//! All analysis code works on mono float samples in `[-1, 1]`. Files are
//! accepted as mono 16/24/32-bit integer or 32-bit float PCM; anything else
//! is rejected rather than silently downmixed.

use std::path::Path;

use crate::error::{Error, Result};

/// Sample rate every pipeline stage runs at unless configured otherwise.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// A mono audio clip held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    /// Identifier used in manifests and reports.
    pub id: String,
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl AudioClip {
    pub fn new(id: impl Into<String>, sample_rate: u32, samples: Vec<f32>) -> Self {
        AudioClip {
            id: id.into(),
            sample_rate,
            samples,
        }
    }

    /// Clip length in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Reads a mono WAV file. The clip id is the file stem.
    pub fn from_wav(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = hound::WavReader::open(path).map_err(|e| match e {
            hound::Error::IoError(io) => Error::io(path, io),
            other => Error::Audio {
                path: path.to_path_buf(),
                detail: other.to_string(),
            },
        })?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::NotMono {
                path: path.to_path_buf(),
                channels: spec.channels,
            });
        }
        let decode = |e: hound::Error| Error::Audio {
            path: path.to_path_buf(),
            detail: e.to_string(),
        };
        let samples = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Float, 32) => reader
                .samples::<f32>()
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(decode)?,
            (hound::SampleFormat::Int, bits) if bits > 0 && bits <= 32 => {
                let scale = 1.0 / (1i64 << (bits - 1)) as f32;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 * scale))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(decode)?
            }
            (format, bits) => {
                return Err(Error::Audio {
                    path: path.to_path_buf(),
                    detail: format!("unsupported sample format {format:?} at {bits} bits"),
                });
            }
        };
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string_lossy().into_owned());
        Ok(AudioClip::new(id, spec.sample_rate, samples))
    }

    /// Returns this clip converted to `rate` by linear interpolation.
    ///
    /// A clip already at `rate` is returned unchanged so repeated calls are
    /// bitwise stable.
    pub fn resampled(&self, rate: u32) -> Result<AudioClip> {
        if rate == 0 {
            return Err(Error::InvalidConfig(
                "target sample rate must be positive".into(),
            ));
        }
        if rate == self.sample_rate || self.samples.is_empty() {
            let mut out = self.clone();
            out.sample_rate = rate;
            return Ok(out);
        }
        let ratio = self.sample_rate as f64 / rate as f64;
        let n_out = ((self.samples.len() as f64 / ratio).round() as usize).max(1);
        let last = self.samples.len() - 1;
        let mut samples = Vec::with_capacity(n_out);
        for i in 0..n_out {
            let pos = i as f64 * ratio;
            let lo = (pos.floor() as usize).min(last);
            let frac = pos - lo as f64;
            let hi = (lo + 1).min(last);
            let v = self.samples[lo] as f64 * (1.0 - frac) + self.samples[hi] as f64 * frac;
            samples.push(v as f32);
        }
        Ok(AudioClip::new(self.id.clone(), rate, samples))
    }
}

/// Writes samples as mono 16-bit PCM, clamping to `[-1, 1]`.
pub fn write_wav_i16(path: impl AsRef<Path>, sample_rate: u32, samples: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let to_model_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Audio {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_model_err)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        writer.write_sample(v).map_err(to_model_err)?;
    }
    writer.finalize().map_err(to_model_err)?;
    Ok(())
}
