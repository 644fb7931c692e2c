//! Layered settings: command-line flags override environment variables,
//! which override the TOML settings file, which overrides built-in
//! defaults. The flag/environment layer is handled by the argument parser;
//! this module owns the file layer and the final resolution.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use weakaed::bags::{FeatureConfig, FeatureMode};
use weakaed::bpmil::LrPolicy;
use weakaed::detector::{CostParam, LearnerSpec};
use weakaed::dsp::MfccConfig;
use weakaed::gmm::UbmConfig;
use weakaed::synth::AudioSynthConfig;

/// A misclassification cost in the settings file: a number, or `"auto"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CostValue {
    Fixed(f64),
    Named(String),
}

impl CostValue {
    fn to_param(&self) -> Result<CostParam> {
        match self {
            CostValue::Fixed(v) => Ok(CostParam::Fixed(*v)),
            CostValue::Named(s) if s.eq_ignore_ascii_case("auto") => Ok(CostParam::auto()),
            CostValue::Named(s) => bail!("cost must be a number or \"auto\", got {s:?}"),
        }
    }
}

/// Background-model fitting overrides.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UbmSection {
    pub components: Option<usize>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub max_frames: Option<usize>,
}

/// The settings file. Every field is optional; anything not set here falls
/// back to the built-in default, and any flag or environment variable set
/// for the same knob wins over this file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    /// Instance features: "f" or "fm".
    pub mode: Option<String>,
    pub segment_len: Option<f64>,
    pub segment_hop: Option<f64>,
    pub relevance: Option<f64>,
    /// "misvm" or "bpmil".
    pub learner: Option<String>,
    pub cost: Option<CostValue>,
    pub max_rounds: Option<usize>,
    pub folds: Option<usize>,
    pub hidden: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub lr_decay: Option<bool>,
    pub mfcc: Option<MfccConfig>,
    pub ubm: Option<UbmSection>,
    pub synth: Option<AudioSynthConfig>,
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("failed to read settings file {}", path.display()))?;
        toml::from_str(&text)
            .with_context(|| format!("failed to parse settings file {}", path.display()))
    }

    pub fn ubm_config(&self, components: Option<usize>, seed: u64) -> UbmConfig {
        let section = self.ubm.clone().unwrap_or_default();
        let defaults = UbmConfig::default();
        UbmConfig {
            components: components
                .or(section.components)
                .unwrap_or(defaults.components),
            seed,
            max_iters: section.max_iters.unwrap_or(defaults.max_iters),
            tol: section.tol.unwrap_or(defaults.tol),
            max_frames: section.max_frames.unwrap_or(defaults.max_frames),
        }
    }
}

/// Per-command feature-extraction flags (the parser fills these, with
/// environment fallbacks where marked).
#[derive(Debug, clap::Args)]
pub struct FeatureArgs {
    /// Instance features: "f" (component histogram) or "fm" (histogram
    /// plus adapted component means)
    #[arg(long, env = "WEAKAED_MODE")]
    pub mode: Option<String>,
    /// Segment length in seconds
    #[arg(long)]
    pub segment_len: Option<f64>,
    /// Segment hop in seconds
    #[arg(long)]
    pub segment_hop: Option<f64>,
    /// Relevance factor blending segment statistics into component means
    #[arg(long)]
    pub relevance: Option<f64>,
}

impl FeatureArgs {
    /// Resolves the full extraction settings. The analysis front end comes
    /// from the background model so features always match what it was
    /// trained on.
    pub fn resolve(&self, cfg: &PipelineConfig, mfcc: MfccConfig) -> Result<FeatureConfig> {
        let defaults = FeatureConfig::default();
        let mode = match self.mode.as_deref().or(cfg.mode.as_deref()) {
            Some(s) => s.parse::<FeatureMode>()?,
            None => defaults.mode,
        };
        let feature = FeatureConfig {
            mode,
            segment_len: self
                .segment_len
                .or(cfg.segment_len)
                .unwrap_or(defaults.segment_len),
            segment_hop: self
                .segment_hop
                .or(cfg.segment_hop)
                .unwrap_or(defaults.segment_hop),
            relevance: self.relevance.or(cfg.relevance).unwrap_or(defaults.relevance),
            mfcc,
        };
        feature.validate()?;
        Ok(feature)
    }
}

/// Per-command learner flags.
#[derive(Debug, clap::Args)]
pub struct LearnerArgs {
    /// Learner to train: "misvm" or "bpmil"
    #[arg(long, env = "WEAKAED_LEARNER")]
    pub learner: Option<String>,
    /// Misclassification cost: a number, or "auto" to grid-search by
    /// cross-validation
    #[arg(long = "c", value_name = "COST")]
    pub c: Option<String>,
    /// Cap on label-imputation rounds
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Hidden units in the network
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Network training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hold the learning rate for the first half of training, then decay
    /// it linearly to a tenth by the final epoch
    #[arg(long)]
    pub lr_decay: bool,
}

impl LearnerArgs {
    pub fn resolve(&self, cfg: &PipelineConfig, folds: usize) -> Result<LearnerSpec> {
        let kind = self
            .learner
            .as_deref()
            .or(cfg.learner.as_deref())
            .unwrap_or("misvm");
        match kind {
            "misvm" => {
                let cost = match self.c.as_deref() {
                    Some(s) if s.eq_ignore_ascii_case("auto") => CostParam::auto(),
                    Some(s) => CostParam::Fixed(
                        s.parse::<f64>()
                            .with_context(|| format!("cost must be a number or \"auto\", got {s:?}"))?,
                    ),
                    None => match &cfg.cost {
                        Some(v) => v.to_param()?,
                        None => CostParam::auto(),
                    },
                };
                Ok(LearnerSpec::MiSvm {
                    c: cost,
                    max_rounds: self.max_rounds.or(cfg.max_rounds).unwrap_or(50),
                    folds,
                })
            }
            "bpmil" => {
                let epochs = self.epochs.or(cfg.epochs).unwrap_or(60);
                let lr = self.lr.or(cfg.lr).unwrap_or(0.1);
                let decay = self.lr_decay || cfg.lr_decay.unwrap_or(false);
                let policy = if decay {
                    LrPolicy::Decay {
                        start: lr,
                        end: lr / 10.0,
                        hold: epochs / 2,
                    }
                } else {
                    LrPolicy::Constant(lr)
                };
                Ok(LearnerSpec::BpMil {
                    hidden: self.hidden.or(cfg.hidden).unwrap_or(16),
                    epochs,
                    lr: policy,
                })
            }
            other => bail!("unknown learner {other:?}; expected \"misvm\" or \"bpmil\""),
        }
    }
}
