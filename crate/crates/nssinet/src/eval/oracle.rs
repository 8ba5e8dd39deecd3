//! Independent band-power oracle.
//!
//! A deliberately simple pipeline — per-channel relative band power into a
//! logistic regression — used to confirm that a planted class effect is
//! present and linearly separable before holding the network to it. Shares
//! nothing with the generator/discriminator path.

use crate::cohort::{samples_for_subject, BalancedCohort, Disease, FoldPlan, Normalize};
use crate::error::{Error, Result};
use crate::synthgen::spectrum::band_power;

/// Per-channel band-power features of one sample: `log(absolute in-band
/// power)` and `log(in-band / total power)`.
pub fn band_power_features(x: &ndarray::Array2<f64>, rate: f64, band: (f64, f64)) -> Vec<f64> {
    let (channels, _) = x.dim();
    let mut feats = Vec::with_capacity(2 * channels);
    for c in 0..channels {
        let row: Vec<f64> = x.row(c).to_vec();
        let in_band = band_power(&row, rate, band.0, band.1);
        let total = band_power(&row, rate, 0.0, rate / 2.0).max(1e-12);
        feats.push(in_band.max(1e-12).ln());
        feats.push(((in_band / total).max(1e-12)).ln());
    }
    feats
}

/// Plain logistic regression trained by full-batch gradient descent on
/// standardized features.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub w: Vec<f64>,
    pub b: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl LogisticModel {
    pub fn fit(features: &[Vec<f64>], labels: &[f64], iters: usize, lr: f64) -> Result<Self> {
        let n = features.len();
        if n == 0 || n != labels.len() {
            return Err(Error::Shape("logistic fit: empty or mismatched inputs".into()));
        }
        let d = features[0].len();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for f in features {
            for j in 0..d {
                mean[j] += f[j] / n as f64;
            }
        }
        for f in features {
            for j in 0..d {
                std[j] += (f[j] - mean[j]).powi(2) / n as f64;
            }
        }
        for s in std.iter_mut() {
            *s = s.sqrt().max(1e-9);
        }
        let x: Vec<Vec<f64>> = features
            .iter()
            .map(|f| (0..d).map(|j| (f[j] - mean[j]) / std[j]).collect())
            .collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..iters {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for i in 0..n {
                let z: f64 = b + w.iter().zip(&x[i]).map(|(w, x)| w * x).sum::<f64>();
                let p = 1.0 / (1.0 + (-z).exp());
                let err = p - labels[i];
                for j in 0..d {
                    gw[j] += err * x[i][j] / n as f64;
                }
                gb += err / n as f64;
            }
            for j in 0..d {
                w[j] -= lr * gw[j];
            }
            b -= lr * gb;
        }
        Ok(LogisticModel { w, b, mean, std })
    }

    pub fn predict(&self, features: &[f64]) -> bool {
        let z: f64 = self.b
            + self
                .w
                .iter()
                .zip(features)
                .zip(self.mean.iter().zip(&self.std))
                .map(|((w, f), (m, s))| w * (f - m) / s)
                .sum::<f64>();
        z > 0.0
    }
}

/// Cross-validated accuracy of the band-power logistic oracle over the same
/// fold plan the network uses. The oracle trains fully supervised on all
/// training-fold samples.
pub fn oracle_cv_accuracy(
    cohort: &BalancedCohort,
    plan: &FoldPlan,
    rate: f64,
    band: (f64, f64),
    window_seconds: f64,
) -> Result<f64> {
    let mut fold_accs = Vec::with_capacity(plan.folds.len());
    for fold in &plan.folds {
        let collect = |ids: &[String]| -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
            let mut feats = Vec::new();
            let mut labels = Vec::new();
            for id in ids {
                let s = cohort
                    .subject_by_id(id)
                    .ok_or_else(|| Error::Contract(format!("subject {id} missing")))?;
                for sample in samples_for_subject(s, window_seconds, Normalize::None)? {
                    feats.push(band_power_features(&sample.x, rate, band));
                    labels.push(if sample.disease == Disease::DnPlus { 1.0 } else { 0.0 });
                }
            }
            Ok((feats, labels))
        };
        let (train_x, train_y) = collect(&fold.train)?;
        let (test_x, test_y) = collect(&fold.test)?;
        let model = LogisticModel::fit(&train_x, &train_y, 400, 0.5)?;
        let correct = test_x
            .iter()
            .zip(&test_y)
            .filter(|(f, y)| model.predict(f) == (**y > 0.5))
            .count();
        fold_accs.push(correct as f64 / test_x.len().max(1) as f64);
    }
    Ok(fold_accs.iter().sum::<f64>() / fold_accs.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_separates_a_linear_problem() {
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        let mut rng = crate::rng::stream(1, "logistic", 0);
        use rand::Rng;
        for i in 0..200 {
            let y = i % 2;
            let x0: f64 = rng.gen_range(-0.5..0.5) + if y == 1 { 1.5 } else { -1.5 };
            let x1: f64 = rng.gen_range(-1.0..1.0);
            feats.push(vec![x0, x1]);
            labels.push(y as f64);
        }
        let model = LogisticModel::fit(&feats, &labels, 300, 0.5).unwrap();
        let correct = feats
            .iter()
            .zip(&labels)
            .filter(|(f, y)| model.predict(f) == (**y > 0.5))
            .count();
        assert!(correct >= 198, "{correct}/200");
    }
}
