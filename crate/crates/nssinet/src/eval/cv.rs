//! Semi-supervised cross-subject k-fold cross-validation.

use serde::{Deserialize, Serialize};

use crate::adversarial::{
    build_pools, predict_disease, DomainMode, HeadSwitches, LossRecord, LossWeights, TrainConfig,
    Trainer,
};
use crate::cohort::{
    make_folds, samples_for_subject, split_source, BalancedCohort, FoldPlan, Gender, Normalize,
    Sample,
};
use crate::error::{Error, Result};
use crate::netcore::GeneratorConfig;
use crate::rng;

use super::confusion::{confusion, ConfusionMatrix};

/// Evaluation-protocol options shared by the CV and sweep drivers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvOptions {
    pub k: usize,
    /// Labeled-source ratio in percent.
    pub tau_percent: f64,
    pub window_seconds: f64,
    pub normalize: Normalize,
    /// Also aggregate per subject by majority vote.
    pub per_subject_vote: bool,
    /// Restrict every sample to a single channel (channel-importance runs);
    /// the generator config must then have `channels = 1`.
    pub channel: Option<usize>,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: 10,
            tau_percent: 75.0,
            window_seconds: 1.0,
            normalize: Normalize::ZScore,
            per_subject_vote: false,
            channel: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_subjects: Vec<String>,
    pub n_test_samples: usize,
    pub accuracy: f64,
    /// Majority-vote accuracy over test subjects, when requested.
    pub subject_accuracy: Option<f64>,
}

/// Everything one cross-validation run produced, sufficient to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CVReport {
    pub per_fold: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// Sample standard deviation across folds.
    pub std_accuracy: f64,
    pub subject_mean_accuracy: Option<f64>,
    /// Pooled over all folds' test predictions.
    pub confusion: Vec<ConfusionMatrix>,
    /// Per-epoch loss components averaged across folds.
    pub mean_loss_curve: Vec<LossRecord>,
    pub options: CvOptions,
    pub train_config: TrainConfig,
    pub weights: LossWeights,
    pub seed: u64,
    pub plan_hash: u64,
    /// Clinical reference values from the source study; not reproducible
    /// from synthetic cohorts and recorded as metadata only.
    pub paper_reference: Option<serde_json::Value>,
}

impl CVReport {
    pub fn accuracy_percent(&self) -> f64 {
        100.0 * self.mean_accuracy
    }
}

struct FoldOutput {
    result: FoldResult,
    predictions: Vec<bool>,
    labels: Vec<bool>,
    genders: Vec<Gender>,
    records: Vec<LossRecord>,
}

fn subject_samples(
    cohort: &BalancedCohort,
    ids: &[String],
    opts: &CvOptions,
) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for id in ids {
        let subject = cohort
            .subject_by_id(id)
            .ok_or_else(|| Error::Contract(format!("subject {id} missing from cohort")))?;
        let mut samples = samples_for_subject(subject, opts.window_seconds, opts.normalize)?;
        if let Some(ch) = opts.channel {
            for s in samples.iter_mut() {
                if ch >= s.x.dim().0 {
                    return Err(Error::Config(format!(
                        "channel {ch} out of range for {} channels",
                        s.x.dim().0
                    )));
                }
                s.x = s.x.slice(ndarray::s![ch..=ch, ..]).to_owned();
            }
        }
        out.extend(samples);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    cohort: &BalancedCohort,
    plan: &FoldPlan,
    fold_idx: usize,
    gen_cfg: GeneratorConfig,
    train_cfg: &TrainConfig,
    weights: LossWeights,
    switches: HeadSwitches,
    domain_mode: DomainMode,
    opts: &CvOptions,
    seed: u64,
) -> Result<FoldOutput> {
    let fold = &plan.folds[fold_idx];
    let fold_seed = rng::derive_seed(seed, "fold", fold_idx as u64);
    let assignment =
        split_source(&fold.train, &fold.test, opts.tau_percent, fold_seed)?;
    let mut samples = subject_samples(cohort, &fold.train, opts)?;
    samples.extend(subject_samples(cohort, &fold.test, opts)?);
    let pools = build_pools(samples, &assignment)?;

    let mut trainer =
        Trainer::new(gen_cfg, *train_cfg, weights, switches, domain_mode, fold_seed)?;
    let records = trainer.train(&pools).map_err(|e| match e {
        Error::Diverged(m) => Error::Diverged(format!("fold {fold_idx}: {m}")),
        other => Error::Data(format!("fold {fold_idx} failed: {other}")),
    })?;

    // Test samples are exactly the target pool, in construction order.
    let test_samples = &pools.target;
    let predictions = predict_disease(&trainer.gen, &trainer.heads, test_samples)?;
    let labels: Vec<bool> =
        test_samples.iter().map(|s| s.disease == crate::cohort::Disease::DnPlus).collect();
    let genders: Vec<Gender> = test_samples.iter().map(|s| s.gender).collect();
    let correct = predictions.iter().zip(&labels).filter(|(p, l)| p == l).count();
    let accuracy = correct as f64 / predictions.len().max(1) as f64;

    let subject_accuracy = if opts.per_subject_vote {
        let mut per_subject: std::collections::BTreeMap<&str, (usize, usize, bool)> =
            std::collections::BTreeMap::new();
        for (i, s) in test_samples.iter().enumerate() {
            let e = per_subject.entry(&s.subject_id).or_insert((0, 0, labels[i]));
            if predictions[i] {
                e.0 += 1;
            }
            e.1 += 1;
        }
        let correct = per_subject
            .values()
            .filter(|(pos, n, label)| (*pos * 2 > *n) == *label)
            .count();
        Some(correct as f64 / per_subject.len().max(1) as f64)
    } else {
        None
    };

    Ok(FoldOutput {
        result: FoldResult {
            fold: fold_idx,
            test_subjects: fold.test.clone(),
            n_test_samples: predictions.len(),
            accuracy,
            subject_accuracy,
        },
        predictions,
        labels,
        genders,
        records,
    })
}

/// Run the full protocol on a pre-built fold plan. Folds are independent;
/// with `jobs > 1` they run on a local thread pool and results are assembled
/// in fold order, so the report does not depend on `jobs`.
#[allow(clippy::too_many_arguments)]
pub fn run_cv_with_plan(
    cohort: &BalancedCohort,
    plan: &FoldPlan,
    gen_cfg: GeneratorConfig,
    train_cfg: &TrainConfig,
    weights: LossWeights,
    switches: HeadSwitches,
    domain_mode: DomainMode,
    opts: &CvOptions,
    seed: u64,
    jobs: usize,
) -> Result<CVReport> {
    let folds: Vec<usize> = (0..plan.folds.len()).collect();
    let outputs: Vec<Result<FoldOutput>> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            folds
                .par_iter()
                .map(|&i| {
                    run_fold(cohort, plan, i, gen_cfg, train_cfg, weights, switches, domain_mode, opts, seed)
                })
                .collect()
        })
    } else {
        folds
            .iter()
            .map(|&i| run_fold(cohort, plan, i, gen_cfg, train_cfg, weights, switches, domain_mode, opts, seed))
            .collect()
    };

    let mut per_fold = Vec::with_capacity(outputs.len());
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    let mut genders = Vec::new();
    let mut curves: Vec<Vec<LossRecord>> = Vec::new();
    for out in outputs {
        let out = out?;
        per_fold.push(out.result);
        predictions.extend(out.predictions);
        labels.extend(out.labels);
        genders.extend(out.genders);
        curves.push(out.records);
    }

    let accs: Vec<f64> = per_fold.iter().map(|f| f.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len().max(1) as f64;
    let std = if accs.len() > 1 {
        (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (accs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let subject_mean = if opts.per_subject_vote {
        let vals: Vec<f64> = per_fold.iter().filter_map(|f| f.subject_accuracy).collect();
        Some(vals.iter().sum::<f64>() / vals.len().max(1) as f64)
    } else {
        None
    };

    let epochs = curves.first().map(|c| c.len()).unwrap_or(0);
    let mut mean_curve = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let k = curves.len() as f64;
        let mut acc = LossRecord { epoch: e, signal: 0.0, gender: 0.0, domain: 0.0, disease: 0.0, total: 0.0 };
        for c in &curves {
            acc.signal += c[e].signal / k;
            acc.gender += c[e].gender / k;
            acc.domain += c[e].domain / k;
            acc.disease += c[e].disease / k;
            acc.total += c[e].total / k;
        }
        mean_curve.push(acc);
    }

    Ok(CVReport {
        per_fold,
        mean_accuracy: mean,
        std_accuracy: std,
        subject_mean_accuracy: subject_mean,
        confusion: confusion(&predictions, &labels, &genders)?,
        mean_loss_curve: mean_curve,
        options: *opts,
        train_config: *train_cfg,
        weights,
        seed,
        plan_hash: plan.partition_hash(),
        paper_reference: None,
    })
}

/// Build a stratified fold plan from the cohort and run the protocol.
#[allow(clippy::too_many_arguments)]
pub fn run_cv(
    cohort: &BalancedCohort,
    gen_cfg: GeneratorConfig,
    train_cfg: &TrainConfig,
    weights: LossWeights,
    switches: HeadSwitches,
    domain_mode: DomainMode,
    opts: &CvOptions,
    seed: u64,
    jobs: usize,
) -> Result<CVReport> {
    let plan = make_folds(cohort, opts.k, rng::derive_seed(seed, "fold-plan", 0))?;
    run_cv_with_plan(cohort, &plan, gen_cfg, train_cfg, weights, switches, domain_mode, opts, seed, jobs)
}
