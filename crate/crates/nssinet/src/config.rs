//! The JSON run configuration: one document with sections mirroring the
//! module configs. Parsing is total — every field has a default, unknown
//! keys are errors — so a config typo can never silently change a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adversarial::{LossWeights, TrainConfig};
use crate::cohort::{CellQuotas, Normalize};
use crate::error::{Error, Result};
use crate::eval::CvOptions;
use crate::synthgen::SynthSpec;

/// Balanced-sampling section. Without explicit quotas the largest equal
/// per-cell quotas the cohort supports are used, which keeps already
/// balanced cohorts intact.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingSection {
    pub quotas: Option<CellQuotas>,
    /// Rounds for the sampling-robustness command.
    pub rounds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Reduced epochs for per-channel retraining.
    pub epochs: usize,
    /// Fold count for per-channel runs (defaults to the main `eval.k`).
    pub k: Option<usize>,
    /// Seeds for repeated channel-importance runs.
    pub seeds: Vec<u64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection { epochs: 20, k: None, seeds: vec![1, 2, 3, 4, 5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub seeds: Vec<u64>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection { seeds: vec![1, 2, 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub k: usize,
    pub tau_percent: f64,
    pub window_seconds: f64,
    pub normalize: Normalize,
    pub per_subject_vote: bool,
    /// Labeled-ratio grid for `sweep-ratio` (percent).
    pub ratio_grid: Vec<f64>,
    /// (alpha, beta, delta, theta) tuples for `sweep-weights`.
    pub weight_tuples: Vec<[f64; 4]>,
    /// Band for the independent band-power oracle, Hz.
    pub oracle_band: (f64, f64),
    pub channel: ChannelSection,
    pub probe: ProbeSection,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k: 10,
            tau_percent: 75.0,
            window_seconds: 1.0,
            normalize: Normalize::ZScore,
            per_subject_vote: false,
            ratio_grid: vec![5.0, 10.0, 25.0, 50.0, 75.0, 85.0],
            weight_tuples: crate::eval::paper_weight_tuples(),
            oracle_band: (8.0, 12.0),
            channel: ChannelSection::default(),
            probe: ProbeSection::default(),
        }
    }
}

/// The complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Existing cohort directory; when absent, commands generate the cohort
    /// in memory from `synth`.
    pub cohort_dir: Option<String>,
    pub synth: SynthSpec,
    pub sampling: SamplingSection,
    pub train: TrainConfig,
    pub weights: LossWeights,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::json("run config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::io(path.as_ref().display().to_string(), e))?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        self.weights.validate()?;
        if self.eval.k < 2 {
            return Err(Error::Config("eval.k must be at least 2".into()));
        }
        if !(self.eval.tau_percent > 0.0 && self.eval.tau_percent <= 100.0) {
            return Err(Error::Config("eval.tau_percent must be in (0, 100]".into()));
        }
        if !(self.eval.window_seconds > 0.0) {
            return Err(Error::Config("eval.window_seconds must be positive".into()));
        }
        for &tau in &self.eval.ratio_grid {
            if !(tau > 0.0 && tau <= 100.0) {
                return Err(Error::Config(format!("ratio_grid value {tau} outside (0, 100]")));
            }
        }
        for t in &self.eval.weight_tuples {
            if t.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::Config(format!("weight tuple {t:?} must be nonnegative")));
            }
        }
        if !(self.eval.oracle_band.0 > 0.0 && self.eval.oracle_band.0 < self.eval.oracle_band.1) {
            return Err(Error::Config("oracle_band must be a nonempty positive band".into()));
        }
        if self.eval.channel.epochs == 0 {
            return Err(Error::Config("channel.epochs must be at least 1".into()));
        }
        if self.eval.channel.seeds.is_empty() || self.eval.probe.seeds.is_empty() {
            return Err(Error::Config("channel and probe seed lists must be nonempty".into()));
        }
        if let Some(rounds) = self.sampling.rounds {
            if rounds < 2 {
                return Err(Error::Config("sampling.rounds must be at least 2".into()));
            }
        }
        Ok(())
    }

    /// CV options assembled from the eval section.
    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            k: self.eval.k,
            tau_percent: self.eval.tau_percent,
            window_seconds: self.eval.window_seconds,
            normalize: self.eval.normalize,
            per_subject_vote: self.eval.per_subject_vote,
            channel: None,
        }
    }
}
