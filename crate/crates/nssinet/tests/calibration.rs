//! Calibration harness for the planted-truth protocols (ignored by default;
//! every test here trains real models for minutes).
//!
//! These runs record how the shipped planted-signal, domain-probe and
//! channel-importance configurations were chosen:
//!
//! - the oracle needs the class effect strong enough that per-second band
//!   power separates the groups (amplitude 2.5 on one channel, band 7-13 Hz
//!   at 96 Hz, subject sigma 0.05);
//! - raw (un-z-scored) input makes the planted absolute-amplitude effect
//!   directly visible to the network; with `lambda` rebalanced to 0.002 the
//!   supervised term is not drowned by reconstruction gradients and 12
//!   epochs reach ~99% ten-fold accuracy;
//! - the probe criterion wants opposite things from `lambda` (the ablation
//!   arm needs reconstruction pressure to keep mixing structure in the
//!   features, the adversarial arm needs headroom to strip it); 0.3 with
//!   shift strength 1.4 and 22 epochs satisfies both with margin;
//! - per-channel retraining localizes the planted channel already at 4
//!   epochs and 3 folds on a 20-subject cohort.
//!
//! Run with `cargo test --test calibration -- --ignored --nocapture`.

use std::time::Instant;

use nssinet::adversarial::{DomainMode, HeadSwitches, LossWeights, TrainConfig};
use nssinet::cohort::{balanced_sample, make_folds, CellQuotas, Normalize};
use nssinet::eval::{
    channel_importance, domain_invariance_probe, oracle_cv_accuracy, run_cv_with_plan, CvOptions,
};
use nssinet::netcore::GeneratorConfig;
use nssinet::synthgen::{generate_cohort, BandEffect, DomainShift, SynthSpec};

/// The planted-signal cohort the acceptance suite uses.
fn planted_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_per_cell: 15,
        channels: 8,
        rate: 96,
        trials_per_subject: 4,
        trial_seconds: 3,
        class_effect: BandEffect {
            channels: vec![3],
            band_hz: (7.0, 13.0),
            amplitude: 2.5,
            base_amplitude: 1.0,
        },
        gender_effect: BandEffect {
            channels: vec![6],
            band_hz: (7.0, 13.0),
            amplitude: 0.8,
            base_amplitude: 1.0,
        },
        subject_sigma: 0.05,
        domain_shift: None,
        noise: Default::default(),
        seed,
    }
}

#[test]
#[ignore]
fn oracle_confirms_the_planted_signal() {
    let (subjects, _) = generate_cohort(&planted_spec(1)).unwrap();
    let cohort = balanced_sample(
        &subjects,
        CellQuotas { females_per_group: 15, males_per_group: 15 },
        1,
    )
    .unwrap();
    let plan = make_folds(&cohort, 10, 1).unwrap();
    let t0 = Instant::now();
    let acc = oracle_cv_accuracy(&cohort, &plan, 96.0, (7.0, 13.0), 1.0).unwrap();
    println!("band-power logistic oracle, 10-fold: {acc:.4} in {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn network_learns_the_planted_signal() {
    let (subjects, _) = generate_cohort(&planted_spec(1)).unwrap();
    let cohort = balanced_sample(
        &subjects,
        CellQuotas { females_per_group: 15, males_per_group: 15 },
        1,
    )
    .unwrap();
    let plan = make_folds(&cohort, 10, 1).unwrap();
    // Two folds give a quick read; the acceptance run does all ten.
    let two = nssinet::cohort::FoldPlan { k: 10, folds: plan.folds[..2].to_vec(), seed: 1 };
    let gen_cfg = GeneratorConfig { channels: 8, points: 96, dropout_rate: 0.25 };
    for (label, normalize, lambda, epochs) in [
        ("raw input, lambda 0.002", Normalize::None, 0.002, 12usize),
        ("z-scored input, lambda 0.05", Normalize::ZScore, 0.05, 16),
    ] {
        let weights = LossWeights { lambda, ..LossWeights::default() };
        let train_cfg = TrainConfig { epochs, ..TrainConfig::default() };
        let opts = CvOptions { k: 10, normalize, ..CvOptions::default() };
        let t0 = Instant::now();
        let rep = run_cv_with_plan(
            &cohort,
            &two,
            gen_cfg,
            &train_cfg,
            weights,
            HeadSwitches::default(),
            DomainMode::ThreeWay,
            &opts,
            7,
            1,
        )
        .unwrap();
        let last = rep.mean_loss_curve.last().unwrap();
        println!(
            "{label}: 2-fold accuracy {:.3} in {:?} (last-epoch disease loss {:.2})",
            rep.mean_accuracy,
            t0.elapsed(),
            last.disease
        );
    }
}

#[test]
#[ignore]
fn probe_gap_under_planted_domain_shift() {
    // The acceptance configuration plus nearby points, to see the margins.
    let gen_cfg = GeneratorConfig { channels: 8, points: 96, dropout_rate: 0.25 };
    for (strength, lambda, epochs) in [(1.4, 0.3, 22usize), (1.2, 0.3, 22), (1.4, 1.0, 22)] {
        let spec = SynthSpec {
            domain_shift: Some(DomainShift { groups: 3, strength }),
            ..planted_spec(2)
        };
        let (subjects, gt) = generate_cohort(&spec).unwrap();
        let train_cfg = TrainConfig { epochs, ..TrainConfig::default() };
        let weights = LossWeights { lambda, ..LossWeights::default() };
        let t0 = Instant::now();
        let rep = domain_invariance_probe(
            &subjects,
            &gt,
            gen_cfg,
            &train_cfg,
            weights,
            1.0,
            Normalize::None,
            &[1, 2],
        )
        .unwrap();
        println!(
            "strength={strength} lambda={lambda} epochs={epochs}: adversarial {:.3} vs ablation {:.3} (2-seed means, {:?})",
            rep.mean_adversarial,
            rep.mean_ablation,
            t0.elapsed()
        );
    }
}

#[test]
#[ignore]
fn channel_localization_across_seeds() {
    let spec = SynthSpec {
        n_per_cell: 5,
        gender_effect: BandEffect { channels: vec![], ..Default::default() },
        ..planted_spec(3)
    };
    let (subjects, _) = generate_cohort(&spec).unwrap();
    let cohort = balanced_sample(
        &subjects,
        CellQuotas { females_per_group: 5, males_per_group: 5 },
        3,
    )
    .unwrap();
    let train_cfg = TrainConfig { epochs: 4, ..TrainConfig::default() };
    let weights = LossWeights { lambda: 0.002, ..LossWeights::default() };
    let opts = CvOptions { k: 3, normalize: Normalize::None, ..CvOptions::default() };
    let t0 = Instant::now();
    let mut rank_first = 0;
    for seed in 1..=5u64 {
        let map = channel_importance(
            &cohort,
            8,
            (0..8).map(|c| format!("ch{c:02}")).collect(),
            96,
            &train_cfg,
            weights,
            &opts,
            seed,
            1,
        )
        .unwrap();
        let ranking = map.ranking();
        println!(
            "seed {seed}: ranking {ranking:?}, accuracies {:?}",
            map.raw_accuracy
                .iter()
                .map(|a| (a * 100.0).round() / 100.0)
                .collect::<Vec<_>>()
        );
        if ranking.first() == Some(&3) {
            rank_first += 1;
        }
    }
    println!("planted channel ranked first in {rank_first}/5 seeds, total {:?}", t0.elapsed());
}
