//! Domain-invariance probes: train a fresh softmax classifier on frozen
//! latent features and measure how much domain information survives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adversarial::{
    build_pools, features_eval, DomainMode, HeadSwitches, LossWeights, TrainConfig, Trainer,
};
use crate::cohort::{samples_for_subject, DomainAssignment, Normalize, Sample, Subject};
use crate::error::{Error, Result};
use crate::netcore::GeneratorConfig;
use crate::rng;
use crate::synthgen::PlantedGroundTruth;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub classes: usize,
}

/// Train a softmax-regression probe on frozen features with a subject-level
/// 50/50 split per class; returns held-out accuracy.
pub fn domain_probe(
    features: &[Vec<f64>],
    class_of: &[usize],
    subject_of: &[String],
    classes: usize,
    seed: u64,
) -> Result<ProbeOutcome> {
    if features.len() != class_of.len() || features.len() != subject_of.len() {
        return Err(Error::Shape("probe inputs differ in length".into()));
    }
    if features.is_empty() {
        return Err(Error::Contract("probe needs at least one sample".into()));
    }
    // Subject-level split: half of each class's subjects into probe-train.
    let mut subjects_by_class: BTreeMap<usize, Vec<&String>> = BTreeMap::new();
    for (i, id) in subject_of.iter().enumerate() {
        let entry = subjects_by_class.entry(class_of[i]).or_default();
        if !entry.contains(&id) {
            entry.push(id);
        }
    }
    let mut train_subjects: Vec<&String> = Vec::new();
    for (class, mut subjects) in subjects_by_class {
        subjects.sort();
        use rand::seq::SliceRandom;
        let mut r = rng::stream(seed, "probe-split", class as u64);
        subjects.shuffle(&mut r);
        train_subjects.extend(subjects.iter().take(subjects.len().div_ceil(2)));
    }
    let is_train: Vec<bool> =
        subject_of.iter().map(|id| train_subjects.contains(&id)).collect();

    let d = features[0].len();
    // Standardize on the training half.
    let train_idx: Vec<usize> = (0..features.len()).filter(|&i| is_train[i]).collect();
    let test_idx: Vec<usize> = (0..features.len()).filter(|&i| !is_train[i]).collect();
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Contract("probe split left an empty half".into()));
    }
    let mut mean = vec![0.0; d];
    let mut std = vec![0.0; d];
    for &i in &train_idx {
        for j in 0..d {
            mean[j] += features[i][j] / train_idx.len() as f64;
        }
    }
    for &i in &train_idx {
        for j in 0..d {
            std[j] += (features[i][j] - mean[j]).powi(2) / train_idx.len() as f64;
        }
    }
    for s in std.iter_mut() {
        *s = s.sqrt().max(1e-9);
    }
    let norm = |i: usize| -> Vec<f64> {
        (0..d).map(|j| (features[i][j] - mean[j]) / std[j]).collect()
    };

    // Multinomial logistic regression, full-batch gradient descent.
    let mut w = vec![0.0; classes * d];
    let mut b = vec![0.0; classes];
    let n = train_idx.len() as f64;
    for _ in 0..800 {
        let mut gw = vec![0.0; classes * d];
        let mut gb = vec![0.0; classes];
        for &i in &train_idx {
            let x = norm(i);
            let mut z: Vec<f64> = (0..classes)
                .map(|c| b[c] + w[c * d..(c + 1) * d].iter().zip(&x).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for zc in z.iter_mut() {
                *zc = (*zc - zmax).exp();
                denom += *zc;
            }
            for c in 0..classes {
                let p = z[c] / denom;
                let err = p - if class_of[i] == c { 1.0 } else { 0.0 };
                for j in 0..d {
                    gw[c * d + j] += err * x[j] / n;
                }
                gb[c] += err / n;
            }
        }
        for j in 0..w.len() {
            w[j] -= 0.5 * gw[j];
        }
        for c in 0..classes {
            b[c] -= 0.5 * gb[c];
        }
    }

    let mut correct = 0usize;
    for &i in &test_idx {
        let x = norm(i);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for c in 0..classes {
            let z = b[c] + w[c * d..(c + 1) * d].iter().zip(&x).map(|(w, x)| w * x).sum::<f64>();
            if z > best.0 {
                best = (z, c);
            }
        }
        if best.1 == class_of[i] {
            correct += 1;
        }
    }
    Ok(ProbeOutcome {
        accuracy: correct as f64 / test_idx.len() as f64,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        classes,
    })
}

/// Result of the invariance comparison: probe accuracy on features from
/// adversarially trained generators versus the beta = delta = 0 ablation,
/// per seed and as means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub adversarial: Vec<f64>,
    pub ablation: Vec<f64>,
    pub mean_adversarial: f64,
    pub mean_ablation: f64,
    pub chance: f64,
}

/// Align the planted subject groups with the three domains (group 0 ->
/// labeled source, 1 -> unlabeled source, 2 -> target), train with and
/// without the adversarial terms per seed, and probe the frozen features.
#[allow(clippy::too_many_arguments)]
pub fn domain_invariance_probe(
    subjects: &[Arc<Subject>],
    gt: &PlantedGroundTruth,
    gen_cfg: GeneratorConfig,
    train_cfg: &TrainConfig,
    weights: LossWeights,
    window_seconds: f64,
    normalize: Normalize,
    seeds: &[u64],
) -> Result<InvarianceReport> {
    let groups: BTreeMap<&str, usize> =
        gt.subjects.iter().map(|p| (p.id.as_str(), p.group)).collect();
    let classes = gt.spec.domain_shift.as_ref().map(|d| d.groups).unwrap_or(1);
    if classes != 3 {
        return Err(Error::Config(format!(
            "the invariance probe expects 3 planted groups, got {classes}"
        )));
    }
    let mut sets: [std::collections::BTreeSet<String>; 3] = Default::default();
    for s in subjects {
        let g = *groups
            .get(s.id())
            .ok_or_else(|| Error::Contract(format!("subject {} missing from ground truth", s.id())))?;
        sets[g].insert(s.id().to_string());
    }
    let assignment = DomainAssignment::new(
        sets[0].clone(),
        sets[1].clone(),
        sets[2].clone(),
        100.0 * sets[0].len() as f64 / (sets[0].len() + sets[1].len()).max(1) as f64,
    )?;

    let mut samples: Vec<Sample> = Vec::new();
    for s in subjects {
        samples.extend(samples_for_subject(s, window_seconds, normalize)?);
    }

    let run_one = |seed: u64, weights: LossWeights, switches: HeadSwitches| -> Result<f64> {
        let pools = build_pools(samples.clone(), &assignment)?;
        let mut trainer = Trainer::new(
            gen_cfg,
            *train_cfg,
            weights,
            switches,
            DomainMode::ThreeWay,
            seed,
        )?;
        trainer.train(&pools)?;
        // Frozen features for every sample, with its planted group label.
        let all: Vec<Sample> = pools
            .labeled
            .iter()
            .chain(pools.unlabeled.iter())
            .chain(pools.target.iter())
            .cloned()
            .collect();
        let feats = features_eval(&trainer.gen, &all)?;
        let class_of: Vec<usize> =
            all.iter().map(|s| groups[s.subject_id.as_ref()]).collect();
        let subject_of: Vec<String> = all.iter().map(|s| s.subject_id.to_string()).collect();
        let probe = domain_probe(&feats, &class_of, &subject_of, 3, rng::derive_seed(seed, "probe", 0))?;
        Ok(probe.accuracy)
    };

    let mut adversarial = Vec::with_capacity(seeds.len());
    let mut ablation = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        adversarial.push(run_one(seed, weights, HeadSwitches::default())?);
        let ablated = LossWeights { beta: 0.0, delta: 0.0, ..weights };
        ablation.push(run_one(
            seed,
            ablated,
            HeadSwitches { gender: false, domain: false, ..HeadSwitches::default() },
        )?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(InvarianceReport {
        mean_adversarial: mean(&adversarial),
        mean_ablation: mean(&ablation),
        adversarial,
        ablation,
        chance: 1.0 / 3.0,
    })
}
