//! The example configs shipped in `configs/` must always parse and validate.

use std::path::Path;

use nssinet::config::RunConfig;

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let cfg = RunConfig::from_path(&path)
                .unwrap_or_else(|e| panic!("{} must parse: {e}", path.display()));
            cfg.validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 3, "expected the shipped configs, found {seen}");
}

#[test]
fn inline_and_saved_cohorts_agree() {
    // `synth` writes exactly the cohort other commands generate inline.
    let cfg = RunConfig::from_str(
        r#"{"synth": {"n_per_cell": 1, "channels": 2, "rate": 32,
             "trials_per_subject": 1, "trial_seconds": 2,
             "class_effect": {"channels": [0], "band_hz": [6.0, 10.0], "amplitude": 1.0},
             "gender_effect": {"channels": [1], "band_hz": [6.0, 10.0], "amplitude": 0.5},
             "seed": 5}}"#,
    )
    .unwrap();
    let inline = nssinet::runner::resolve_cohort(&cfg).unwrap();

    let tmp = tempfile::tempdir().unwrap();
    let (generated, gt) = nssinet::synthgen::generate_cohort(&cfg.synth).unwrap();
    nssinet::synthgen::save_with_ground_truth(&generated, &gt, tmp.path(), "x").unwrap();
    let (loaded, _) = nssinet::cohort::load_cohort(tmp.path()).unwrap();

    let bits = |subjects: &[std::sync::Arc<nssinet::cohort::Subject>]| -> Vec<u32> {
        subjects
            .iter()
            .flat_map(|s| s.trials().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())))
            .collect()
    };
    assert_eq!(bits(&inline), bits(&loaded));
}
