//! Synthetic corpora with known ground truth.
//!
//! Two generators back the test and calibration tooling. The feature-space
//! generator emits bags of Gaussian instances where the positive cluster
//! sits at a configurable distance from the background, together with the
//! hidden per-instance truth. The audio generator renders WAV clips of
//! noise with narrowband events mixed in at random times, and returns a
//! manifest whose weak tags and strong annotations describe exactly what
//! was rendered.
//!
//! Audio difficulty is a dial: every clip always carries a stationary
//! narrowband masker noise in each event's frequency band (so band energy
//! alone cannot reveal the label), and the event-to-masker ratio is set by
//! `snr_db`. High values make events stand far out of their band's noise
//! floor; negative values bury them in it.

use std::f64::consts::PI;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::write_wav_i16;
use crate::bags::{Bag, Manifest, RecordingEntry, StrongAnnotation, TimeSpan};
use crate::error::{Error, Result};

/// Feature-space bag generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureBagConfig {
    pub positive_bags: usize,
    pub negative_bags: usize,
    pub instances_per_bag: usize,
    pub dim: usize,
    /// Euclidean distance between the positive and background cluster means
    /// (both clusters have unit variance per coordinate).
    pub separation: f64,
    pub seed: u64,
}

impl Default for FeatureBagConfig {
    fn default() -> Self {
        FeatureBagConfig {
            positive_bags: 20,
            negative_bags: 20,
            instances_per_bag: 5,
            dim: 2,
            separation: 6.0,
            seed: 0,
        }
    }
}

/// Draws bags of Gaussian instances plus the hidden instance truth.
///
/// Positive bags carry 1–3 instances from the positive cluster (never more
/// than the bag holds); all other instances are background draws. Negative
/// bags are pure background.
pub fn gen_feature_bags(cfg: &FeatureBagConfig) -> Result<(Vec<Bag>, Vec<Vec<bool>>)> {
    if !cfg.separation.is_finite() || cfg.separation < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "separation must be non-negative, got {}",
            cfg.separation
        )));
    }
    if cfg.dim == 0 || cfg.instances_per_bag == 0 {
        return Err(Error::InvalidConfig(
            "bags need at least one instance of at least one dimension".into(),
        ));
    }
    if cfg.positive_bags == 0 || cfg.negative_bags == 0 {
        return Err(Error::InvalidConfig(
            "need at least one bag of each class".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Per-coordinate offset placing the positive mean `separation` away.
    let offset = cfg.separation / (cfg.dim as f64).sqrt();
    let mut bags = Vec::with_capacity(cfg.positive_bags + cfg.negative_bags);
    let mut truth = Vec::with_capacity(bags.capacity());

    for i in 0..cfg.positive_bags + cfg.negative_bags {
        let positive = i < cfg.positive_bags;
        let n_hot = if positive {
            rng.random_range(1..=3.min(cfg.instances_per_bag))
        } else {
            0
        };
        // Scatter the positive instances across bag positions.
        let mut hot = vec![false; cfg.instances_per_bag];
        for j in rand::seq::index::sample(&mut rng, cfg.instances_per_bag, n_hot) {
            hot[j] = true;
        }
        let instances: Vec<Vec<f64>> = hot
            .iter()
            .map(|&is_hot| {
                (0..cfg.dim)
                    .map(|_| {
                        let base = if is_hot { offset } else { 0.0 };
                        base + rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect()
            })
            .collect();
        let spans = (0..cfg.instances_per_bag)
            .map(|j| TimeSpan::new(j as f64 * 0.5, j as f64 * 0.5 + 1.0))
            .collect();
        let id = if positive {
            format!("pos{i:03}")
        } else {
            format!("neg{:03}", i - cfg.positive_bags)
        };
        bags.push(Bag {
            clip_id: id,
            positive,
            spans,
            instances,
        });
        truth.push(hot);
    }
    Ok((bags, truth))
}

/// Spectral family of one event type. Each band bounds the whole family;
/// every occurrence draws its own realization inside it, so occurrences of
/// the same event vary the way real-world sounds do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EventShape {
    /// Pure sinusoid; each occurrence picks its frequency in `[low, high]`.
    Tone { low: f64, high: f64 },
    /// Band-limited noise; each occurrence picks a subband of `[low, high]`.
    NoiseBurst { low: f64, high: f64 },
    /// Linear sweep between two frequencies drawn from `[low, high]`.
    Chirp { low: f64, high: f64 },
}

impl EventShape {
    /// Frequency extent `(low, high)` the family occupies.
    pub fn band(&self) -> (f64, f64) {
        match *self {
            EventShape::Tone { low, high }
            | EventShape::NoiseBurst { low, high }
            | EventShape::Chirp { low, high } => (low, high),
        }
    }
}

/// A named event type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventTemplate {
    pub name: String,
    #[serde(flatten)]
    pub shape: EventShape,
}

/// Broadband background level (nominal RMS of the noise bed).
const BED_RMS: f64 = 0.05;
/// Always-on narrowband masker level per event band.
const MASKER_RMS: f64 = 0.02;
/// Padding around an event's band covered by its masker.
const MASKER_PAD_HZ: f64 = 60.0;
/// Raised-cosine attack/release applied to event onsets and offsets.
const RAMP_S: f64 = 0.010;

/// Audio corpus generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioSynthConfig {
    pub events: Vec<EventTemplate>,
    pub clips: usize,
    /// Clip duration range in seconds.
    pub clip_len: (f64, f64),
    /// Event occurrences per clip (inclusive range).
    pub events_per_clip: (usize, usize),
    /// Event duration range in seconds.
    pub event_len: (f64, f64),
    /// Event level relative to its band's masker noise, in dB.
    pub snr_db: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for AudioSynthConfig {
    fn default() -> Self {
        AudioSynthConfig {
            events: vec![
                EventTemplate {
                    name: "tone".into(),
                    shape: EventShape::Tone {
                        low: 700.0,
                        high: 1100.0,
                    },
                },
                EventTemplate {
                    name: "burst".into(),
                    shape: EventShape::NoiseBurst {
                        low: 2000.0,
                        high: 3500.0,
                    },
                },
                EventTemplate {
                    name: "chirp".into(),
                    shape: EventShape::Chirp {
                        low: 4500.0,
                        high: 6000.0,
                    },
                },
            ],
            clips: 120,
            clip_len: (4.0, 12.0),
            events_per_clip: (0, 3),
            event_len: (0.6, 1.4),
            snr_db: 20.0,
            sample_rate: 16_000,
            seed: 0,
        }
    }
}

impl AudioSynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::InvalidConfig("no event templates".into()));
        }
        if self.clips == 0 {
            return Err(Error::InvalidConfig("need at least one clip".into()));
        }
        let mut names: Vec<&str> = self.events.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.events.len() || names.iter().any(|n| n.is_empty()) {
            return Err(Error::InvalidConfig(
                "event template names must be unique and non-empty".into(),
            ));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for t in &self.events {
            let (lo, hi) = t.shape.band();
            if !(lo.is_finite() && hi.is_finite()) || lo <= MASKER_PAD_HZ || hi >= nyquist - MASKER_PAD_HZ {
                return Err(Error::InvalidConfig(format!(
                    "event '{}' band [{lo}, {hi}] leaves no room inside (0, {nyquist}) \
                     with {MASKER_PAD_HZ} Hz of masker padding",
                    t.name
                )));
            }
            if lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "event '{}' band is inverted",
                    t.name
                )));
            }
        }
        let (lo, hi) = self.clip_len;
        if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
            return Err(Error::InvalidConfig(format!(
                "clip length range ({lo}, {hi}) is not a positive interval"
            )));
        }
        let (elo, ehi) = self.event_len;
        if !(elo.is_finite() && ehi.is_finite()) || elo <= 0.0 || ehi < elo {
            return Err(Error::InvalidConfig(format!(
                "event length range ({elo}, {ehi}) is not a positive interval"
            )));
        }
        if ehi > lo {
            return Err(Error::InvalidConfig(format!(
                "longest event ({ehi} s) must fit in the shortest clip ({lo} s)"
            )));
        }
        if self.events_per_clip.1 < self.events_per_clip.0 {
            return Err(Error::InvalidConfig(
                "events_per_clip range is inverted".into(),
            ));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidConfig("snr_db must be finite".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Noise of length `n` with a random-phase spectrum confined to `band`,
/// returned at unit RMS. `tilt_db_per_octave` slopes the magnitude around a
/// 500 Hz pivot; zero keeps the band flat.
fn shaped_noise(
    n: usize,
    band: (f64, f64),
    sample_rate: f64,
    tilt_db_per_octave: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut spectrum = vec![Complex::new(0.0, 0.0); n];
    let hz_per_bin = sample_rate / n as f64;
    let lo_bin = ((band.0 / hz_per_bin).ceil() as usize).max(1);
    let hi_bin = ((band.1 / hz_per_bin).floor() as usize).min(n / 2);
    for bin in lo_bin..=hi_bin.max(lo_bin) {
        let freq = bin as f64 * hz_per_bin;
        let mag = 10f64.powf(tilt_db_per_octave * (freq / 500.0).log2() / 20.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        spectrum[bin] = Complex::new(mag * phase.cos(), mag * phase.sin());
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let mut out: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        for v in &mut out {
            *v /= rms;
        }
    }
    out
}

/// Band-limited flat-spectrum noise at unit RMS.
fn band_noise(n: usize, band: (f64, f64), sample_rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    shaped_noise(n, band, sample_rate, 0.0, rng)
}

/// One event occurrence waveform at unit RMS, ramps applied. The concrete
/// realization (frequency, subband, sweep endpoints) is drawn here, so two
/// occurrences of the same event differ like real-world sounds do.
fn event_waveform(
    shape: &EventShape,
    n: usize,
    sample_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut wave: Vec<f64> = match *shape {
        EventShape::Tone { low, high } => {
            let freq = rng.random_range(low..=high);
            let phase0 = rng.random_range(0.0..2.0 * PI);
            (0..n)
                .map(|i| (2.0 * PI * freq * i as f64 / sample_rate + phase0).sin())
                .collect()
        }
        EventShape::NoiseBurst { low, high } => {
            let width = (high - low) * rng.random_range(0.3..=1.0);
            let center = rng.random_range(low + width / 2.0..=high - width / 2.0);
            band_noise(
                n,
                (center - width / 2.0, center + width / 2.0),
                sample_rate,
                rng,
            )
        }
        EventShape::Chirp { low, high } => {
            let from = rng.random_range(low..=high);
            let to = rng.random_range(low..=high);
            let phase0 = rng.random_range(0.0..2.0 * PI);
            let dur = n as f64 / sample_rate;
            (0..n)
                .map(|i| {
                    let t = i as f64 / sample_rate;
                    // Instantaneous frequency sweeps linearly from..to.
                    let arg = 2.0 * PI * (from * t + (to - from) * t * t / (2.0 * dur));
                    (arg + phase0).sin()
                })
                .collect()
        }
    };
    let ramp = ((RAMP_S * sample_rate) as usize).min(n / 2).max(1);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
        wave[i] *= g;
        wave[n - 1 - i] *= g;
    }
    let rms = (wave.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        for v in &mut wave {
            *v /= rms;
        }
    }
    wave
}

/// Padded masker spans, with overlapping or touching spans merged so the
/// noise floor stays flat where event bands meet or coincide.
fn masker_spans(events: &[EventTemplate]) -> Vec<(f64, f64)> {
    let mut padded: Vec<(f64, f64)> = events
        .iter()
        .map(|t| {
            let (lo, hi) = t.shape.band();
            (lo - MASKER_PAD_HZ, hi + MASKER_PAD_HZ)
        })
        .collect();
    padded.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in padded {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

struct Occurrence {
    template: usize,
    start: f64,
    duration: f64,
}

/// Renders one clip's samples from its placement plan.
fn render_clip(
    cfg: &AudioSynthConfig,
    len_s: f64,
    occurrences: &[Occurrence],
    render_seed: u64,
) -> Vec<f64> {
    let sr = cfg.sample_rate as f64;
    let n = (len_s * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(render_seed);

    // Broadband bed.
    let mut samples: Vec<f64> = (0..n)
        .map(|_| BED_RMS * rng.sample::<f64, _>(StandardNormal))
        .collect();

    // Every event band gets its masker in every clip, label or not;
    // bands that meet or overlap share one continuous masker.
    for span in masker_spans(&cfg.events) {
        let masker = band_noise(n, span, sr, &mut rng);
        for (s, m) in samples.iter_mut().zip(&masker) {
            *s += MASKER_RMS * m;
        }
    }

    let event_rms = MASKER_RMS * 10f64.powf(cfg.snr_db / 20.0);
    for occ in occurrences {
        let shape = &cfg.events[occ.template].shape;
        let start = (occ.start * sr).round() as usize;
        let len = ((occ.duration * sr).round() as usize).max(2);
        let wave = event_waveform(shape, len, sr, &mut rng);
        for (i, w) in wave.iter().enumerate() {
            if start + i < samples.len() {
                samples[start + i] += event_rms * w;
            }
        }
    }
    samples
}

/// Renders a corpus of WAV clips into `out_dir` and returns its manifest.
///
/// The manifest references clips by bare file name, carries a weak tag for
/// every event type that occurs in a clip, and records each occurrence as a
/// strong annotation with exact times. Identical configurations produce
/// byte-identical WAVs and manifests.
pub fn gen_audio_corpus(cfg: &AudioSynthConfig, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut recordings = Vec::with_capacity(cfg.clips);
    for i in 0..cfg.clips {
        let len_s = master.random_range(cfg.clip_len.0..=cfg.clip_len.1);
        let n_events = master.random_range(cfg.events_per_clip.0..=cfg.events_per_clip.1);
        let occurrences: Vec<Occurrence> = (0..n_events)
            .map(|_| {
                let template = master.random_range(0..cfg.events.len());
                let duration = master.random_range(cfg.event_len.0..=cfg.event_len.1);
                let start = master.random_range(0.0..=len_s - duration);
                Occurrence {
                    template,
                    start,
                    duration,
                }
            })
            .collect();
        let render_seed: u64 = master.random();

        let samples = render_clip(cfg, len_s, &occurrences, render_seed);
        let id = format!("clip_{i:03}");
        let file = format!("{id}.wav");
        write_wav_i16(out_dir.join(&file), cfg.sample_rate, &samples)?;

        let mut weak: Vec<String> = occurrences
            .iter()
            .map(|o| cfg.events[o.template].name.clone())
            .collect();
        weak.sort_unstable();
        weak.dedup();
        let strong: Vec<StrongAnnotation> = occurrences
            .iter()
            .map(|o| StrongAnnotation {
                event: cfg.events[o.template].name.clone(),
                start: o.start,
                end: o.start + o.duration,
            })
            .collect();
        recordings.push(RecordingEntry {
            id,
            path: file,
            weak,
            strong,
        });
    }

    let manifest = Manifest {
        events: cfg.events.iter().map(|e| e.name.clone()).collect(),
        recordings,
    };
    manifest.validate()?;
    Ok(manifest)
}
