//! Per-channel importance: retrain a single-channel model per channel (the
//! spatial kernel degenerates to [1,1]), record its accuracy, and min-max
//! normalize the accuracies into importance scores.

use serde::{Deserialize, Serialize};

use crate::adversarial::{DomainMode, HeadSwitches, LossWeights, TrainConfig};
use crate::cohort::{make_folds, BalancedCohort};
use crate::error::Result;
use crate::netcore::GeneratorConfig;
use crate::rng;

use super::cv::{run_cv_with_plan, CvOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelImportanceMap {
    pub channel_names: Vec<String>,
    /// Per-channel CV accuracy; NaN for channels whose run failed.
    pub raw_accuracy: Vec<f64>,
    /// Min-max normalized scores in [0, 1]; 0.5 everywhere when the
    /// accuracies are indistinguishable (flagged `low_contrast`).
    pub score: Vec<f64>,
    pub low_contrast: bool,
    /// Channels whose retraining failed, with the error message.
    pub missing: Vec<(usize, String)>,
}

impl ChannelImportanceMap {
    /// Channel indices ranked best-first (missing channels excluded).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> =
            (0..self.raw_accuracy.len()).filter(|&i| self.raw_accuracy[i].is_finite()).collect();
        idx.sort_by(|&a, &b| {
            self.raw_accuracy[b]
                .partial_cmp(&self.raw_accuracy[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx
    }
}

/// Retrain per channel at (typically) reduced epochs and fold count; every
/// channel reuses the same fold plan and per-channel derived seeds.
#[allow(clippy::too_many_arguments)]
pub fn channel_importance(
    cohort: &BalancedCohort,
    channels: usize,
    channel_names: Vec<String>,
    points: usize,
    train_cfg: &TrainConfig,
    weights: LossWeights,
    opts: &CvOptions,
    seed: u64,
    jobs: usize,
) -> Result<ChannelImportanceMap> {
    let plan = make_folds(cohort, opts.k, rng::derive_seed(seed, "fold-plan", 0))?;
    let gen_cfg = GeneratorConfig { channels: 1, points, dropout_rate: train_cfg.dropout };
    let mut raw = vec![f64::NAN; channels];
    let mut missing = Vec::new();
    for ch in 0..channels {
        let o = CvOptions { channel: Some(ch), ..*opts };
        let result = run_cv_with_plan(
            cohort,
            &plan,
            gen_cfg,
            train_cfg,
            weights,
            HeadSwitches::default(),
            DomainMode::ThreeWay,
            &o,
            rng::derive_seed(seed, "channel", ch as u64),
            jobs,
        );
        match result {
            Ok(report) => raw[ch] = report.mean_accuracy,
            Err(e) => missing.push((ch, e.to_string())),
        }
    }
    let finite: Vec<f64> = raw.iter().copied().filter(|v| v.is_finite()).collect();
    let (min, max) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let low_contrast = finite.is_empty() || (max - min) < 1e-9;
    let score = raw
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                f64::NAN
            } else if low_contrast {
                0.5
            } else {
                (v - min) / (max - min)
            }
        })
        .collect();
    Ok(ChannelImportanceMap { channel_names, raw_accuracy: raw, score, low_contrast, missing })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_normalization_maps_extremes() {
        let map = ChannelImportanceMap {
            channel_names: vec!["a".into(), "b".into(), "c".into()],
            raw_accuracy: vec![0.5, 0.9, 0.7],
            score: vec![0.0, 1.0, 0.5],
            low_contrast: false,
            missing: vec![],
        };
        assert_eq!(map.ranking(), vec![1, 2, 0]);
    }
}
