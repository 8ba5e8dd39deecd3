//! Planted-effect contracts for the synthetic cohort generator, verified
//! with an FFT periodogram oracle.

use nssinet::cohort::{Disease, Gender};
use nssinet::synthgen::spectrum::{band_power, permutation_test};
use nssinet::synthgen::{generate_cohort, BandEffect, SynthSpec};

fn base_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        n_per_cell: 15,
        channels: 8,
        rate: 96,
        trials_per_subject: 4,
        trial_seconds: 3,
        class_effect: BandEffect {
            channels: vec![3],
            band_hz: (8.0, 12.0),
            amplitude: 1.0,
            base_amplitude: 3.0,
        },
        gender_effect: BandEffect {
            channels: vec![6],
            band_hz: (8.0, 12.0),
            amplitude: 0.6,
            base_amplitude: 3.0,
        },
        subject_sigma: 0.1,
        domain_shift: None,
        noise: Default::default(),
        seed,
    }
}

/// Mean in-band periodogram power of one channel across a group's trials.
fn group_band_power(
    subjects: &[std::sync::Arc<nssinet::cohort::Subject>],
    select: impl Fn(&nssinet::cohort::Subject) -> bool,
    channel: usize,
    band: (f64, f64),
    rate: f64,
) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in subjects.iter().filter(|s| select(s)) {
        for trial in s.trials() {
            let row: Vec<f64> = trial.data().row(channel).iter().map(|&v| f64::from(v)).collect();
            total += band_power(&row, rate, band.0, band.1);
            n += 1;
        }
    }
    total / n as f64
}

#[test]
fn planted_class_effect_hits_the_squared_amplitude_ratio() {
    // amplitude a = 1.0 scales DN+ in-band amplitude by (1+a), so the power
    // ratio is (1+a)^2 = 4, verified within [3.5, 4.5] by the periodogram.
    let (subjects, _) = generate_cohort(&base_spec(11)).unwrap();
    let plus = group_band_power(&subjects, |s| s.disease() == Disease::DnPlus, 3, (8.0, 12.0), 96.0);
    let minus =
        group_band_power(&subjects, |s| s.disease() == Disease::DnMinus, 3, (8.0, 12.0), 96.0);
    let ratio = plus / minus;
    assert!((3.5..=4.5).contains(&ratio), "power ratio {ratio}");
}

#[test]
fn gender_effect_lands_on_its_own_channel() {
    let (subjects, _) = generate_cohort(&base_spec(12)).unwrap();
    let female =
        group_band_power(&subjects, |s| s.gender() == Gender::Female, 6, (8.0, 12.0), 96.0);
    let male = group_band_power(&subjects, |s| s.gender() == Gender::Male, 6, (8.0, 12.0), 96.0);
    let ratio = female / male;
    let want = (1.0f64 + 0.6).powi(2);
    assert!((ratio - want).abs() < 0.5, "gender power ratio {ratio}, want ~{want}");
    // And the class channel carries no gender difference.
    let female3 =
        group_band_power(&subjects, |s| s.gender() == Gender::Female, 3, (8.0, 12.0), 96.0);
    let male3 = group_band_power(&subjects, |s| s.gender() == Gender::Male, 3, (8.0, 12.0), 96.0);
    assert!((female3 / male3 - 1.0).abs() < 0.25, "{}", female3 / male3);
}

#[test]
fn zero_amplitude_is_statistically_invisible() {
    // With amplitude 0 the DN+/DN- band-power distributions must be
    // indistinguishable: permutation test on per-subject means, p > 0.01.
    let spec = SynthSpec {
        class_effect: BandEffect { amplitude: 0.0, ..base_spec(13).class_effect },
        ..base_spec(13)
    };
    let (subjects, _) = generate_cohort(&spec).unwrap();
    let per_subject: Vec<(Disease, f64)> = subjects
        .iter()
        .map(|s| {
            let mut total = 0.0;
            for trial in s.trials() {
                let row: Vec<f64> =
                    trial.data().row(3).iter().map(|&v| f64::from(v)).collect();
                total += band_power(&row, 96.0, 8.0, 12.0);
            }
            (s.disease(), (total / s.trials().len() as f64).ln())
        })
        .collect();
    let a: Vec<f64> =
        per_subject.iter().filter(|(d, _)| *d == Disease::DnPlus).map(|(_, v)| *v).collect();
    let b: Vec<f64> =
        per_subject.iter().filter(|(d, _)| *d == Disease::DnMinus).map(|(_, v)| *v).collect();
    let mut rng = nssinet::rng::stream(14, "perm-test", 0);
    let p = permutation_test(&a, &b, 999, &mut rng);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn domain_mixing_changes_channel_structure_between_groups() {
    use nssinet::synthgen::DomainShift;
    let spec = SynthSpec {
        domain_shift: Some(DomainShift { groups: 3, strength: 0.8 }),
        ..base_spec(15)
    };
    let (subjects, gt) = generate_cohort(&spec).unwrap();
    // Groups are balanced across disease and gender by round-robin.
    for g in 0..3 {
        let members: Vec<_> = gt.subjects.iter().filter(|p| p.group == g).collect();
        assert_eq!(members.len(), 20);
        let dn_plus = members.iter().filter(|p| p.disease == Disease::DnPlus).count();
        assert_eq!(dn_plus, 10);
        let females = members.iter().filter(|p| p.gender == Gender::Female).count();
        assert_eq!(females, 10);
    }
    // Off-effect channels inherit in-band power from mixing with channel 3;
    // the amount differs by group because the mixing matrices differ.
    let group_of: std::collections::BTreeMap<&str, usize> =
        gt.subjects.iter().map(|p| (p.id.as_str(), p.group)).collect();
    let mut leak = [0.0f64; 3];
    let mut counts = [0usize; 3];
    for s in &subjects {
        let g = group_of[s.id()];
        for trial in s.trials() {
            let row: Vec<f64> = trial.data().row(0).iter().map(|&v| f64::from(v)).collect();
            leak[g] += band_power(&row, 96.0, 8.0, 12.0);
            counts[g] += 1;
        }
    }
    for g in 0..3 {
        leak[g] /= counts[g] as f64;
    }
    let spread = leak.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        / leak.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread > 1.15, "mixing should differentiate groups: {leak:?}");
}
