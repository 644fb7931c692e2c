//! Short-time cepstral analysis.
//!
//! The front end turns a clip into a matrix of MFCC vectors: pre-emphasis,
//! Hann-windowed frames, FFT magnitude spectrum, triangular mel filterbank,
//! floored log, and an orthonormal DCT-II. The first coefficient (overall
//! log energy) is kept: with an orthonormal DCT a pure gain change moves
//! only that coefficient, so the rest of the vector is level-invariant and
//! the level itself stays available to the models.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};

/// Front-end parameters. `Default` is the configuration every model in this
/// crate is trained with; anything else must be carried alongside the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    /// Analysis window length in seconds.
    pub frame_len_s: f64,
    /// Hop between window starts in seconds.
    pub hop_len_s: f64,
    /// First-difference pre-emphasis coefficient.
    pub pre_emphasis: f64,
    /// FFT length; must be at least the window length in samples.
    pub fft_size: usize,
    /// Number of triangular mel filters.
    pub n_mels: usize,
    /// Number of cepstral coefficients kept, counting the energy term.
    pub n_coeffs: usize,
    /// Lower clamp applied to filterbank energies before the log.
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: DEFAULT_SAMPLE_RATE,
            frame_len_s: 0.020,
            hop_len_s: 0.010,
            pre_emphasis: 0.97,
            fft_size: 512,
            n_mels: 40,
            n_coeffs: 21,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn frame_len(&self) -> usize {
        (self.sample_rate as f64 * self.frame_len_s).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.sample_rate as f64 * self.hop_len_s).round() as usize
    }

    /// Time of the center of analysis window `idx`, in seconds.
    pub fn frame_center(&self, idx: usize) -> f64 {
        (idx * self.hop_len()) as f64 / self.sample_rate as f64 + self.frame_len_s / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        if !(self.frame_len_s > 0.0) || !(self.hop_len_s > 0.0) {
            return Err(Error::InvalidConfig(
                "frame_len_s and hop_len_s must be positive".into(),
            ));
        }
        if self.frame_len() == 0 || self.hop_len() == 0 {
            return Err(Error::InvalidConfig(
                "frame and hop must each cover at least one sample".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::InvalidConfig(
                "pre_emphasis must lie in [0, 1)".into(),
            ));
        }
        if self.fft_size < self.frame_len() {
            return Err(Error::InvalidConfig(format!(
                "fft_size {} is smaller than the {}-sample window",
                self.fft_size,
                self.frame_len()
            )));
        }
        if self.n_mels < 2 {
            return Err(Error::InvalidConfig("n_mels must be at least 2".into()));
        }
        if self.n_coeffs == 0 || self.n_coeffs > self.n_mels {
            return Err(Error::InvalidConfig(format!(
                "n_coeffs must lie in 1..={} (got {})",
                self.n_mels, self.n_coeffs
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::InvalidConfig("log_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Cepstral vectors for one clip, one row per analysis window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccMatrix {
    pub frames: Vec<Vec<f64>>,
}

impl MfccMatrix {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Coefficients per frame.
    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }
}

/// Splits `samples` into fixed-length windows starting every `hop` samples.
///
/// Produces `(N - len) / hop + 1` windows; trailing samples that do not fill
/// a whole window are dropped. Fewer than `len` samples is an error.
pub fn frame_signal(samples: &[f32], len: usize, hop: usize) -> Result<Vec<Vec<f32>>> {
    if len == 0 || hop == 0 {
        return Err(Error::InvalidConfig(
            "window and hop must be positive".into(),
        ));
    }
    if samples.len() < len {
        return Err(Error::ClipTooShort {
            samples: samples.len(),
            needed: len,
        });
    }
    let count = (samples.len() - len) / hop + 1;
    let mut frames = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * hop;
        frames.push(samples[start..start + len].to_vec());
    }
    Ok(frames)
}

/// Computes the MFCC matrix of a clip.
///
/// The clip must already be at the configured sample rate; resampling is an
/// explicit separate step so that identical input always yields identical
/// output.
pub fn mfcc(clip: &AudioClip, cfg: &MfccConfig) -> Result<MfccMatrix> {
    cfg.validate()?;
    if clip.sample_rate != cfg.sample_rate {
        return Err(Error::InvalidConfig(format!(
            "clip {} is at {} Hz but the front end expects {} Hz; resample first",
            clip.id, clip.sample_rate, cfg.sample_rate
        )));
    }
    let len = cfg.frame_len();
    let hop = cfg.hop_len();
    if clip.samples.len() < len {
        return Err(Error::ClipTooShort {
            samples: clip.samples.len(),
            needed: len,
        });
    }

    // Pre-emphasis over the whole signal; the first sample passes through.
    let mut emphasized = Vec::with_capacity(clip.samples.len());
    emphasized.push(clip.samples[0] as f64);
    for w in clip.samples.windows(2) {
        emphasized.push(w[1] as f64 - cfg.pre_emphasis * w[0] as f64);
    }

    let window = hann_window(len);
    let filters = mel_filterbank(cfg);
    let dct = dct_matrix(cfg.n_coeffs, cfg.n_mels);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(cfg.fft_size);
    let n_bins = cfg.fft_size / 2 + 1;
    let mut buf = vec![Complex::new(0.0f64, 0.0); cfg.fft_size];
    let mut magnitude = vec![0.0f64; n_bins];
    let mut mel_log = vec![0.0f64; cfg.n_mels];

    let count = (clip.samples.len() - len) / hop + 1;
    let mut frames = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let v = if i < len {
                emphasized[start + i] * window[i]
            } else {
                0.0
            };
            *slot = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (b, m) in magnitude.iter_mut().enumerate() {
            *m = buf[b].norm();
        }
        for (f, filter) in filters.iter().enumerate() {
            let e: f64 = filter.iter().map(|&(b, w)| w * magnitude[b]).sum();
            mel_log[f] = e.max(cfg.log_floor).ln();
        }
        let mut coeffs = Vec::with_capacity(cfg.n_coeffs);
        for row in &dct {
            coeffs.push(row.iter().zip(&mel_log).map(|(c, e)| c * e).sum());
        }
        frames.push(coeffs);
    }
    Ok(MfccMatrix { frames })
}

fn hann_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / (len - 1) as f64).cos())
        .collect()
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters as sparse (bin, weight) lists, centers equally spaced
/// on the mel scale between 0 Hz and Nyquist.
fn mel_filterbank(cfg: &MfccConfig) -> Vec<Vec<(usize, f64)>> {
    let n_bins = cfg.fft_size / 2 + 1;
    let max_mel = hz_to_mel(cfg.sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;
    (0..cfg.n_mels)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut filter = Vec::new();
            for b in 0..n_bins {
                let f = b as f64 * bin_hz;
                let w = if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
                if w > 0.0 {
                    filter.push((b, w));
                }
            }
            filter
        })
        .collect()
}

/// Orthonormal DCT-II basis, `n_out` rows over `n_in` points.
fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    let norm0 = (1.0 / n_in as f64).sqrt();
    let norm = (2.0 / n_in as f64).sqrt();
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 { norm0 } else { norm };
            (0..n_in)
                .map(|n| {
                    scale
                        * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64
                            / (2 * n_in) as f64)
                            .cos()
                })
                .collect()
        })
        .collect()
}
