//! Training-loop contracts: determinism, reductions, gradient isolation,
//! the adversarial sign convention, and loss-record bookkeeping.

use nssinet::adversarial::{
    build_pools, total_loss, DomainMode, GenderMode, HeadSwitches, LossComponents, LossWeights,
    StepBatch, TrainConfig, Trainer,
};
use nssinet::cohort::{balanced_sample, make_folds, samples_for_subject, split_source, CellQuotas,
    Normalize, Sample};
use nssinet::netcore::{Generator, GeneratorConfig};
use nssinet::synthgen::{generate_cohort, BandEffect, SynthSpec};

fn tiny_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_per_cell: 2,
        channels: 3,
        rate: 32,
        trials_per_subject: 2,
        trial_seconds: 2,
        class_effect: BandEffect { channels: vec![0], band_hz: (6.0, 10.0), amplitude: 1.0, base_amplitude: 3.0 },
        gender_effect: BandEffect { channels: vec![2], band_hz: (6.0, 10.0), amplitude: 0.5, base_amplitude: 3.0 },
        subject_sigma: 0.05,
        domain_shift: None,
        noise: Default::default(),
        seed,
    }
}

fn gen_cfg() -> GeneratorConfig {
    GeneratorConfig { channels: 3, points: 32, dropout_rate: 0.25 }
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_labeled: 4,
        batch_unlabeled: 2,
        batch_target: 2,
        head_hidden: 8,
        ..TrainConfig::default()
    }
}

/// Build tagged pools from a tiny synthetic cohort.
fn tiny_pools(seed: u64) -> nssinet::adversarial::DomainPools {
    let (subjects, _) = generate_cohort(&tiny_spec(seed)).unwrap();
    let balanced =
        balanced_sample(&subjects, CellQuotas { females_per_group: 2, males_per_group: 2 }, seed)
            .unwrap();
    let plan = make_folds(&balanced, 4, seed).unwrap();
    let fold = &plan.folds[0];
    let assignment = split_source(&fold.train, &fold.test, 66.0, seed).unwrap();
    let mut samples: Vec<Sample> = Vec::new();
    for s in balanced.subjects() {
        samples.extend(samples_for_subject(s, 1.0, Normalize::ZScore).unwrap());
    }
    build_pools(samples, &assignment).unwrap()
}

fn gen_bits(gen: &Generator) -> Vec<u64> {
    let mut v = Vec::new();
    gen.visit(|_, _, t| v.extend(t.iter().map(|x| x.to_bits())));
    v
}

fn first_batch(pools: &nssinet::adversarial::DomainPools) -> StepBatch<'_> {
    StepBatch {
        labeled: pools.labeled.iter().take(4).collect(),
        unlabeled: pools.unlabeled.iter().take(2).collect(),
        target: pools.target.iter().take(2).collect(),
    }
}

#[test]
fn train_step_is_bit_reproducible() {
    let pools = tiny_pools(100);
    let run = || {
        let mut t = Trainer::new(
            gen_cfg(),
            tiny_cfg(),
            LossWeights::default(),
            HeadSwitches::default(),
            DomainMode::ThreeWay,
            7,
        )
        .unwrap();
        let out = t.train_step(&first_batch(&pools)).unwrap();
        (gen_bits(&t.gen), out.total.to_bits())
    };
    let (a_params, a_total) = run();
    let (b_params, b_total) = run();
    assert_eq!(a_params, b_params);
    assert_eq!(a_total, b_total);
}

#[test]
fn zero_adversarial_weights_reduce_to_autoencoder_plus_disease() {
    // With beta = delta = 0, the generator update must equal the update of a
    // run whose gender/domain heads are switched off entirely.
    let pools = tiny_pools(101);
    let weights_zero = LossWeights { beta: 0.0, delta: 0.0, ..LossWeights::default() };
    let mut with_heads = Trainer::new(
        gen_cfg(),
        tiny_cfg(),
        weights_zero,
        HeadSwitches::default(),
        DomainMode::ThreeWay,
        9,
    )
    .unwrap();
    let mut without_heads = Trainer::new(
        gen_cfg(),
        tiny_cfg(),
        weights_zero,
        HeadSwitches { gender: false, domain: false, ..HeadSwitches::default() },
        DomainMode::ThreeWay,
        9,
    )
    .unwrap();
    let oa = with_heads.train_step(&first_batch(&pools)).unwrap();
    let ob = without_heads.train_step(&first_batch(&pools)).unwrap();
    let flat = |g: &Generator| {
        let mut v = Vec::new();
        g.visit(|_, _, t| v.extend_from_slice(t));
        v
    };
    let (va, vb) = (flat(&oa.gen_grads), flat(&ob.gen_grads));
    for i in 0..va.len() {
        assert!(
            (va[i] - vb[i]).abs() <= 1e-12 * va[i].abs().max(1.0),
            "generator gradient differs at {i}: {} vs {}",
            va[i],
            vb[i]
        );
    }
    assert_eq!(gen_bits(&with_heads.gen), gen_bits(&without_heads.gen));
}

#[test]
fn unlabeled_and_target_samples_leave_the_disease_head_untouched() {
    let pools = tiny_pools(102);
    let mut t = Trainer::new(
        gen_cfg(),
        tiny_cfg(),
        LossWeights::default(),
        HeadSwitches::default(),
        DomainMode::ThreeWay,
        11,
    )
    .unwrap();
    let f_before = t.heads.disease_f.clone();
    // A batch with no labeled-source samples at all.
    let batch = StepBatch {
        labeled: Vec::new(),
        unlabeled: pools.unlabeled.iter().take(3).collect(),
        target: pools.target.iter().take(3).collect(),
    };
    let out = t.train_step(&batch).unwrap();
    for t in [&out.disease_grads.w1, &out.disease_grads.b1, &out.disease_grads.w2, &out.disease_grads.b2]
    {
        assert!(t.iter().all(|&v| v == 0.0), "disease-head gradient must be exactly zero");
    }
    for (a, b) in [
        (&f_before.w1, &t.heads.disease_f.w1),
        (&f_before.b1, &t.heads.disease_f.b1),
        (&f_before.w2, &t.heads.disease_f.w2),
        (&f_before.b2, &t.heads.disease_f.b2),
    ] {
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            "disease-head parameters must be unchanged"
        );
    }
    assert_eq!(out.components.disease, 0.0);
}

#[test]
fn invariance_mode_negates_the_cooperative_gender_gradient() {
    let pools = tiny_pools(103);
    // Only the gender term reaches the generator: alpha = lambda = delta =
    // theta = 0; identical seeds keep parameters and head updates equal.
    let weights =
        LossWeights { alpha: 0.0, lambda: 0.0, delta: 0.0, theta: 0.0, beta: 1.0 };
    let mk = |mode: GenderMode| {
        Trainer::new(
            gen_cfg(),
            TrainConfig { gender_mode: mode, ..tiny_cfg() },
            weights,
            HeadSwitches::default(),
            DomainMode::ThreeWay,
            13,
        )
        .unwrap()
    };
    let mut inv = mk(GenderMode::Invariance);
    let mut coop = mk(GenderMode::Cooperative);
    let oi = inv.train_step(&first_batch(&pools)).unwrap();
    let oc = coop.train_step(&first_batch(&pools)).unwrap();
    let flat = |g: &Generator| {
        let mut v = Vec::new();
        g.visit(|_, _, t| v.extend_from_slice(t));
        v
    };
    let (vi, vc) = (flat(&oi.gen_grads), flat(&oc.gen_grads));
    let mut nonzero = 0usize;
    for i in 0..vi.len() {
        // Numeric equality: exact negation for nonzero values, and +0 == -0.
        assert!(vi[i] == -vc[i], "coordinate {i} is not an exact negation: {} vs {}", vi[i], vc[i]);
        if vi[i] != 0.0 {
            nonzero += 1;
        }
    }
    assert!(nonzero > 100, "gender gradient actually flows ({nonzero} nonzero coords)");
}

#[test]
fn reconstruction_only_training_descends_the_reconstruction_loss() {
    // All adversarial weights zero: the generator is a pure autoencoder
    // (theta = 0 keeps even the disease pressure out).
    let pools = tiny_pools(104);
    let weights = LossWeights { alpha: 0.0, beta: 0.0, delta: 0.0, theta: 0.0, lambda: 1.0 };
    let cfg = TrainConfig { epochs: 5, ..tiny_cfg() };
    let mut t = Trainer::new(
        gen_cfg(),
        cfg,
        weights,
        HeadSwitches { signal: false, gender: false, domain: false },
        DomainMode::ThreeWay,
        15,
    )
    .unwrap();
    let records = t.train(&pools).unwrap();
    assert_eq!(records.len(), 5);
    // signal component = lambda * reconstruction here; allow one
    // non-monotone epoch.
    let mut violations = 0;
    for w in records.windows(2) {
        if w[1].signal > w[0].signal {
            violations += 1;
        }
    }
    assert!(violations <= 1, "reconstruction loss not trending down: {records:?}");
    assert!(records.last().unwrap().signal < records[0].signal);
}

#[test]
fn epoch_records_count_and_additivity() {
    let pools = tiny_pools(105);
    let weights = LossWeights { alpha: 0.5, beta: 1.5, delta: 0.25, theta: 2.0, lambda: 1.0 };
    let mut t = Trainer::new(
        gen_cfg(),
        TrainConfig { epochs: 4, ..tiny_cfg() },
        weights,
        HeadSwitches::default(),
        DomainMode::ThreeWay,
        17,
    )
    .unwrap();
    let records = t.train(&pools).unwrap();
    assert_eq!(records.len(), 4);
    for r in &records {
        let c = LossComponents {
            signal: r.signal,
            gender: r.gender,
            domain: r.domain,
            disease: r.disease,
        };
        assert!(
            (r.total - total_loss(&c, &weights)).abs() <= 1e-9,
            "total does not equal the weighted component sum: {r:?}"
        );
    }
}

#[test]
fn same_seed_gives_identical_loss_curves() {
    let pools = tiny_pools(106);
    let run = |seed: u64| {
        let mut t = Trainer::new(
            gen_cfg(),
            tiny_cfg(),
            LossWeights::default(),
            HeadSwitches::default(),
            DomainMode::ThreeWay,
            seed,
        )
        .unwrap();
        t.train(&pools).unwrap()
    };
    let a = run(21);
    let b = run(21);
    let c = run(22);
    let bits = |r: &[nssinet::adversarial::LossRecord]| {
        r.iter().map(|x| x.total.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn two_way_domain_mode_merges_the_source_classes() {
    let pools = tiny_pools(107);
    let mut t = Trainer::new(
        gen_cfg(),
        tiny_cfg(),
        LossWeights::default(),
        HeadSwitches::default(),
        DomainMode::TwoWay,
        23,
    )
    .unwrap();
    assert_eq!(t.heads.domain_d.out_f, 2);
    let out = t.train_step(&first_batch(&pools)).unwrap();
    assert!(out.total.is_finite());
}

#[test]
fn divergence_guard_aborts_runaway_training() {
    // An absurd learning rate on raw-scale reconstruction blows the total
    // loss past 1000x its initial value; the guard must abort, not NaN out.
    let pools = tiny_pools(108);
    let weights = LossWeights { lambda: 1.0, ..LossWeights::default() };
    let mut t = Trainer::new(
        gen_cfg(),
        TrainConfig { lr: 50.0, epochs: 40, ..tiny_cfg() },
        weights,
        HeadSwitches::default(),
        DomainMode::ThreeWay,
        31,
    )
    .unwrap();
    match t.train(&pools) {
        Err(nssinet::Error::Diverged(msg)) => {
            assert!(msg.contains("exceeds"), "{msg}");
        }
        Err(other) => panic!("expected divergence, got {other}"),
        Ok(records) => panic!(
            "training should have diverged; last total {:?}",
            records.last().map(|r| r.total)
        ),
    }
}
