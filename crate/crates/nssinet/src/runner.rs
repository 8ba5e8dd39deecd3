//! Command drivers: each run resolves its cohort, executes one experiment,
//! and leaves a self-describing immutable output directory with a manifest,
//! the resolved config snapshot and all artifacts.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::adversarial::{
    build_pools, predict_disease, save_model, DomainMode, HeadSwitches, Trainer,
};
use crate::cohort::{
    balanced_sample, load_cohort, make_folds, samples_for_subject, split_source, BalancedCohort,
    CellQuotas, Disease, Gender, Subject,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    ablate, channel_importance, domain_invariance_probe, oracle_cv_accuracy, ratio_sweep, report,
    run_cv, sampling_robustness, weight_sweep, AblationVariant, CvOptions,
};
use crate::netcore::GeneratorConfig;
use crate::rng;
use crate::synthgen::{generate_cohort, save_with_ground_truth};

/// Everything a run needs besides the config file itself.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: RunConfig,
    pub config_path: String,
    pub jobs: usize,
    pub deterministic: bool,
    pub out_dir: PathBuf,
}

/// The provenance record written into every run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub seed: u64,
    pub jobs: usize,
    pub deterministic: bool,
    pub artifacts: Vec<String>,
    pub started_at_unix_ms: u128,
    pub finished_at_unix_ms: u128,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub metrics: serde_json::Value,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Create the run directory; an existing nonempty directory is refused so
/// runs stay immutable.
fn prepare_out_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let nonempty = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir.display().to_string(), e))?
            .next()
            .is_some();
        if nonempty {
            return Err(Error::Config(format!(
                "output directory {} already exists and is not empty",
                dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    Ok(())
}

struct RunDir {
    dir: PathBuf,
    artifacts: Vec<String>,
    started: u128,
}

impl RunDir {
    fn start(ctx: &RunContext) -> Result<RunDir> {
        prepare_out_dir(&ctx.out_dir)?;
        let mut rd =
            RunDir { dir: ctx.out_dir.clone(), artifacts: Vec::new(), started: now_ms() };
        // Resolved config snapshot: replaying it reproduces the run.
        rd.write_json("config.json", &ctx.config)?;
        Ok(rd)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        report::write_json(self.path(name), value)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        report::write_text(self.path(name), text)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, ctx: &RunContext, command: &str, metrics: serde_json::Value) -> Result<RunSummary> {
        let manifest = RunManifest {
            command: command.to_string(),
            config_path: ctx.config_path.clone(),
            seed: ctx.config.seed,
            jobs: ctx.jobs,
            deterministic: ctx.deterministic,
            artifacts: {
                let mut a = self.artifacts.clone();
                a.push("manifest.json".to_string());
                a
            },
            started_at_unix_ms: self.started,
            finished_at_unix_ms: now_ms(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        report::write_json(self.path("manifest.json"), &manifest)?;
        self.artifacts.push("manifest.json".to_string());
        Ok(RunSummary {
            command: command.to_string(),
            out_dir: self.dir,
            artifacts: self.artifacts,
            metrics,
        })
    }
}

/// Load the configured cohort directory, or generate the synthetic cohort in
/// memory when none is configured.
pub fn resolve_cohort(cfg: &RunConfig) -> Result<Vec<Arc<Subject>>> {
    match &cfg.cohort_dir {
        Some(dir) => {
            let (subjects, _) = load_cohort(dir)?;
            Ok(subjects)
        }
        None => Ok(generate_cohort(&cfg.synth)?.0),
    }
}

/// Largest equal per-cell quotas the pool supports.
fn inferred_quotas(pool: &[Arc<Subject>]) -> Result<CellQuotas> {
    let count = |d: Disease, g: Gender| {
        pool.iter().filter(|s| s.disease() == d && s.gender() == g).count()
    };
    let f = count(Disease::DnPlus, Gender::Female).min(count(Disease::DnMinus, Gender::Female));
    let m = count(Disease::DnPlus, Gender::Male).min(count(Disease::DnMinus, Gender::Male));
    if f + m == 0 {
        return Err(Error::Data("cohort has no balanced subjects at all".into()));
    }
    Ok(CellQuotas { females_per_group: f, males_per_group: m })
}

fn balanced(cfg: &RunConfig, pool: &[Arc<Subject>]) -> Result<BalancedCohort> {
    let quotas = match cfg.sampling.quotas {
        Some(q) => q,
        None => inferred_quotas(pool)?,
    };
    balanced_sample(pool, quotas, rng::derive_seed(cfg.seed, "balanced-sample", 0))
}

/// Derive the generator shape from the cohort rate and analysis window.
fn generator_config(cfg: &RunConfig, rate: u32) -> Result<GeneratorConfig> {
    let points = cfg.eval.window_seconds * rate as f64;
    if (points - points.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "window of {} s is not a whole number of samples at {rate} Hz",
            cfg.eval.window_seconds
        )));
    }
    let gc = GeneratorConfig {
        channels: 0, // filled by callers
        points: points.round() as usize,
        dropout_rate: cfg.train.dropout,
    };
    Ok(gc)
}

fn cohort_rate(subjects: &[Arc<Subject>]) -> Result<u32> {
    subjects
        .first()
        .and_then(|s| s.trials().first())
        .map(|t| t.rate())
        .ok_or_else(|| Error::Data("cohort is empty".into()))
}

fn cohort_channels(subjects: &[Arc<Subject>]) -> Result<usize> {
    subjects
        .first()
        .and_then(|s| s.trials().first())
        .map(|t| t.channels())
        .ok_or_else(|| Error::Data("cohort is empty".into()))
}

/// `synth`: write the synthetic cohort directory plus ground truth.
pub fn run_synth(ctx: &RunContext) -> Result<RunSummary> {
    let rd = RunDir::start(ctx)?;
    // The cohort is a pure function of the synth section (its own seed), so
    // `synth` + `cv --cohort_dir` and an inline-cohort `cv` agree exactly.
    let spec = ctx.config.synth.clone();
    let (subjects, gt) = generate_cohort(&spec)?;
    let cohort_dir = rd.path("cohort");
    save_with_ground_truth(&subjects, &gt, &cohort_dir, "synthetic")?;
    let mut rd = rd;
    rd.artifacts.push("cohort".to_string());
    let metrics = serde_json::json!({
        "subjects": subjects.len(),
        "channels": spec.channels,
        "rate": spec.rate,
        "trials_per_subject": spec.trials_per_subject,
    });
    rd.finish(ctx, "synth", metrics)
}

/// `train`: one training run with fold 0 of the plan as the held-out target.
pub fn run_train(ctx: &RunContext) -> Result<RunSummary> {
    let mut rd = RunDir::start(ctx)?;
    let cfg = &ctx.config;
    let pool = resolve_cohort(cfg)?;
    let cohort = balanced(cfg, &pool)?;
    let rate = cohort_rate(&pool)?;
    let mut gen_cfg = generator_config(cfg, rate)?;
    gen_cfg.channels = cohort_channels(&pool)?;
    gen_cfg.validate()?;

    let plan = make_folds(&cohort, cfg.eval.k, rng::derive_seed(cfg.seed, "fold-plan", 0))?;
    let fold = &plan.folds[0];
    let fold_seed = rng::derive_seed(cfg.seed, "fold", 0);
    let assignment = split_source(&fold.train, &fold.test, cfg.eval.tau_percent, fold_seed)?;
    let opts = cfg.cv_options();
    let mut samples = Vec::new();
    for id in fold.train.iter().chain(fold.test.iter()) {
        let subject = cohort
            .subject_by_id(id)
            .ok_or_else(|| Error::Contract(format!("subject {id} missing")))?;
        samples.extend(samples_for_subject(subject, opts.window_seconds, opts.normalize)?);
    }
    let pools = build_pools(samples, &assignment)?;
    let mut trainer = Trainer::new(
        gen_cfg,
        cfg.train,
        cfg.weights,
        HeadSwitches::default(),
        DomainMode::ThreeWay,
        fold_seed,
    )?;
    let records = trainer.train(&pools)?;
    let preds = predict_disease(&trainer.gen, &trainer.heads, &pools.target)?;
    let labels: Vec<bool> =
        pools.target.iter().map(|s| s.disease == Disease::DnPlus).collect();
    let acc = preds.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64
        / preds.len().max(1) as f64;

    rd.write_text("loss_curve.csv", &report::loss_curve_csv(&records))?;
    save_model(
        rd.path("model.ckpt"),
        &trainer.gen,
        &trainer.heads,
        serde_json::json!({ "seed": cfg.seed, "fold": 0 }),
    )?;
    rd.artifacts.push("model.ckpt".to_string());
    let metrics = serde_json::json!({
        "epochs": records.len(),
        "final_total_loss": records.last().map(|r| r.total),
        "holdout_fold": 0,
        "holdout_accuracy": acc,
    });
    rd.finish(ctx, "train", metrics)
}

fn full_cv(ctx: &RunContext, opts: &CvOptions) -> Result<crate::eval::CVReport> {
    let cfg = &ctx.config;
    let pool = resolve_cohort(cfg)?;
    let cohort = balanced(cfg, &pool)?;
    let rate = cohort_rate(&pool)?;
    let mut gen_cfg = generator_config(cfg, rate)?;
    gen_cfg.channels = cohort_channels(&pool)?;
    gen_cfg.validate()?;
    run_cv(
        &cohort,
        gen_cfg,
        &cfg.train,
        cfg.weights,
        HeadSwitches::default(),
        DomainMode::ThreeWay,
        opts,
        cfg.seed,
        ctx.jobs,
    )
}

/// `cv`: the full semi-supervised cross-subject protocol.
pub fn run_cv_command(ctx: &RunContext) -> Result<RunSummary> {
    let mut rd = RunDir::start(ctx)?;
    let mut rep = full_cv(ctx, &ctx.config.cv_options())?;
    rep.paper_reference = Some(serde_json::json!({
        "note": "clinical accuracy of the source study; not reproducible without the private dataset",
        "accuracy": "70.00 +/- 13.90",
    }));
    rd.write_json("cv_report.json", &rep)?;
    rd.write_text("cv_report.csv", &report::cv_report_csv(&rep))?;
    rd.write_text("loss_curves.csv", &report::loss_curve_csv(&rep.mean_loss_curve))?;
    rd.write_text("confusion.csv", &report::confusion_csv(&rep))?;
    let metrics = serde_json::json!({
        "mean_accuracy": rep.mean_accuracy,
        "std_accuracy": rep.std_accuracy,
        "folds": rep.per_fold.len(),
    });
    rd.finish(ctx, "cv", metrics)
}

/// `ablate`: the discriminator ablation grid under shared folds.
pub fn run_ablate(ctx: &RunContext) -> Result<RunSummary> {
    let mut rd = RunDir::start(ctx)?;
    let cfg = &ctx.config;
    let pool = resolve_cohort(cfg)?;
    let cohort = balanced(cfg, &pool)?;
    let rate = cohort_rate(&pool)?;
    let mut gen_cfg = generator_config(cfg, rate)?;
    gen_cfg.channels = cohort_channels(&pool)?;
    gen_cfg.validate()?;
    let table = ablate(
        &cohort,
        gen_cfg,
        &cfg.train,
        cfg.weights,
        &AblationVariant::all(),
        &cfg.cv_options(),
        cfg.seed,
        ctx.jobs,
    )?;
    rd.write_json("ablation.json", &table)?;
    rd.write_text("ablation.csv", &report::sweep_csv(&table))?;
    let metrics = serde_json::json!({
        "variants": table.rows.iter().map(|r| r.label.clone()).collect::<Vec<_>>(),
    });
    rd.finish(ctx, "ablate", metrics)
}

/// `sweep-ratio`: labeled-source ratio sweep.
pub fn run_sweep_ratio(ctx: &RunContext) -> Result<RunSummary> {
    let mut rd = RunDir::start(ctx)?;
    let cfg = &ctx.config;
    let pool = resolve_cohort(cfg)?;
    let cohort = balanced(cfg, &pool)?;
    let rate = cohort_rate(&pool)?;
    let mut gen_cfg = generator_config(cfg, rate)?;
    gen_cfg.channels = cohort_channels(&pool)?;
    gen_cfg.validate()?;
    let table = ratio_sweep(
        &cohort,
        gen_cfg,
        &cfg.train,
        cfg.weights,
        &cfg.eval.ratio_grid,
        &cfg.cv_options(),
        cfg.seed,
        ctx.jobs,
    )?;
    rd.write_json("ratio_sweep.json", &table)?;
    rd.write_text("ratio_sweep.csv", &report::sweep_csv(&table))?;
    let metrics = serde_json::json!({ "points": table.rows.len() });
    rd.finish(ctx, "sweep-ratio", metrics)
}

/// `sweep-weights`: the loss-weight ratio sweep.
pub fn run_sweep_weights(ctx: &RunContext) -> Result<RunSummary> {
    let mut rd = RunDir::start(ctx)?;
    let cfg = &ctx.config;
    let pool = resolve_cohort(cfg)?;
    let cohort = balanced(cfg, &pool)?;
    let rate = cohort_rate(&pool)?;
    let mut gen_cfg = generator_config(cfg, rate)?;
    gen_cfg.channels = cohort_channels(&pool)?;
    gen_cfg.validate()?;
    let table = weight_sweep(
        &cohort,
        gen_cfg,
        &cfg.train,
        cfg.weights,
        &cfg.eval.weight_tuples,
        &cfg.cv_options(),
        cfg.seed,
        ctx.jobs,
    )?;
    rd.write_json("weight_sweep.json", &table)?;
    rd.write_text("weight_sweep.csv", &report::sweep_csv(&table))?;
    let metrics = serde_json::json!({ "points": table.rows.len() });
    rd.finish(ctx, "sweep-weights", metrics)
}

/// `sampling`: repeat balanced sampling and the full protocol.
pub fn run_sampling(ctx: &RunContext) -> Result<RunSummary> {
    let mut rd = RunDir::start(ctx)?;
    let cfg = &ctx.config;
    let pool = resolve_cohort(cfg)?;
    let quotas = match cfg.sampling.quotas {
        Some(q) => q,
        None => inferred_quotas(&pool)?,
    };
    let rounds = cfg.sampling.rounds.unwrap_or(5);
    let rate = cohort_rate(&pool)?;
    let mut gen_cfg = generator_config(cfg, rate)?;
    gen_cfg.channels = cohort_channels(&pool)?;
    gen_cfg.validate()?;
    let table = sampling_robustness(
        &pool,
        quotas,
        rounds,
        gen_cfg,
        &cfg.train,
        cfg.weights,
        &cfg.cv_options(),
        cfg.seed,
        ctx.jobs,
    )?;
    rd.write_json("sampling.json", &table)?;
    rd.write_text("sampling.csv", &report::sweep_csv(&table))?;
    let accs: Vec<f64> = table.rows.iter().map(|r| r.report.mean_accuracy).collect();
    let metrics = serde_json::json!({
        "rounds": rounds,
        "min_accuracy": accs.iter().cloned().fold(f64::INFINITY, f64::min),
        "max_accuracy": accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    });
    rd.finish(ctx, "sampling", metrics)
}

/// `channels`: per-channel importance map with CSV and SVG topography.
pub fn run_channels(ctx: &RunContext) -> Result<RunSummary> {
    let mut rd = RunDir::start(ctx)?;
    let cfg = &ctx.config;
    let pool = resolve_cohort(cfg)?;
    let cohort = balanced(cfg, &pool)?;
    let rate = cohort_rate(&pool)?;
    let channels = cohort_channels(&pool)?;
    let gen_cfg = generator_config(cfg, rate)?;
    let channel_names: Vec<String> = match &cfg.cohort_dir {
        Some(dir) => load_cohort(dir)?.1.channel_names,
        None => (0..channels).map(|c| format!("ch{c:02}")).collect(),
    };
    let mut train_cfg = cfg.train;
    train_cfg.epochs = cfg.eval.channel.epochs;
    let opts = CvOptions {
        k: cfg.eval.channel.k.unwrap_or(cfg.eval.k),
        ..cfg.cv_options()
    };
    // One map per configured seed; scores averaged, per-seed rankings kept.
    let mut maps = Vec::new();
    for &seed in &cfg.eval.channel.seeds {
        let map = channel_importance(
            &cohort,
            channels,
            channel_names.clone(),
            gen_cfg.points,
            &train_cfg,
            cfg.weights,
            &opts,
            rng::derive_seed(cfg.seed, "channel-seed", seed),
            ctx.jobs,
        )?;
        maps.push(map);
    }
    let mean_map = {
        let mut acc = maps[0].clone();
        let n = maps.len() as f64;
        for i in 0..acc.raw_accuracy.len() {
            acc.raw_accuracy[i] = maps.iter().map(|m| m.raw_accuracy[i]).sum::<f64>() / n;
            acc.score[i] = maps.iter().map(|m| m.score[i]).sum::<f64>() / n;
        }
        acc
    };
    rd.write_json("channels.json", &serde_json::json!({
        "mean": mean_map,
        "per_seed": maps,
        "seeds": cfg.eval.channel.seeds,
    }))?;
    rd.write_text("topography.csv", &report::channel_csv(&mean_map))?;
    rd.write_text("topography.svg", &report::channel_svg(&mean_map))?;
    let metrics = serde_json::json!({
        "best_channel_per_seed": maps.iter().map(|m| m.ranking().first().copied()).collect::<Vec<_>>(),
    });
    rd.finish(ctx, "channels", metrics)
}

/// The domain-invariance probe (used by the acceptance suite and available
/// for ad-hoc runs via the library).
pub fn run_probe(ctx: &RunContext) -> Result<RunSummary> {
    let mut rd = RunDir::start(ctx)?;
    let cfg = &ctx.config;
    if cfg.synth.domain_shift.is_none() {
        return Err(Error::Config("the probe needs synth.domain_shift configured".into()));
    }
    let (subjects, gt) = generate_cohort(&cfg.synth)?;
    let rate = cohort_rate(&subjects)?;
    let mut gen_cfg = generator_config(cfg, rate)?;
    gen_cfg.channels = cohort_channels(&subjects)?;
    gen_cfg.validate()?;
    let rep = domain_invariance_probe(
        &subjects,
        &gt,
        gen_cfg,
        &cfg.train,
        cfg.weights,
        cfg.eval.window_seconds,
        cfg.eval.normalize,
        &cfg.eval.probe.seeds,
    )?;
    rd.write_json("probe.json", &rep)?;
    let metrics = serde_json::json!({
        "mean_adversarial": rep.mean_adversarial,
        "mean_ablation": rep.mean_ablation,
    });
    rd.finish(ctx, "probe", metrics)
}

/// Oracle accuracy on the configured cohort (library surface for tests).
pub fn oracle_accuracy(cfg: &RunConfig) -> Result<f64> {
    let pool = resolve_cohort(cfg)?;
    let cohort = balanced(cfg, &pool)?;
    let rate = cohort_rate(&pool)?;
    let plan = make_folds(&cohort, cfg.eval.k, rng::derive_seed(cfg.seed, "fold-plan", 0))?;
    oracle_cv_accuracy(&cohort, &plan, rate as f64, cfg.eval.oracle_band, cfg.eval.window_seconds)
}

/// `report`: consolidate a finished run directory into a summary bundle.
pub fn run_report(run_dir: &Path, out_dir: &Path) -> Result<RunSummary> {
    let manifest_path = run_dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::Config(format!(
            "no manifest found in {}",
            run_dir.display()
        )));
    }
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::json("manifest.json", e))?;

    prepare_out_dir(out_dir)?;
    let mut summary_rows = vec![format!("artifact,kind")];
    let mut metrics = serde_json::Map::new();
    metrics.insert("command".into(), serde_json::json!(manifest.command));
    metrics.insert("seed".into(), serde_json::json!(manifest.seed));
    for name in &manifest.artifacts {
        let src = run_dir.join(name);
        if !src.exists() {
            continue;
        }
        let kind = if src.is_dir() { "directory" } else { "file" };
        summary_rows.push(format!("{name},{kind}"));
        if name.ends_with(".json") && name != "manifest.json" && name != "config.json" {
            if let Ok(body) = std::fs::read_to_string(&src) {
                if let Ok(v) = serde_json::from_str::<serde_json::Value>(&body) {
                    let key = name.trim_end_matches(".json").to_string();
                    metrics.insert(key, extract_metrics(&v));
                }
            }
        }
        if src.is_file() {
            let dst = out_dir.join(name);
            std::fs::copy(&src, &dst).map_err(|e| Error::io(dst.display().to_string(), e))?;
        }
    }
    let summary = serde_json::Value::Object(metrics);
    report::write_json(out_dir.join("summary.json"), &summary)?;
    report::write_text(out_dir.join("summary.csv"), &(summary_rows.join("\n") + "\n"))?;
    Ok(RunSummary {
        command: "report".to_string(),
        out_dir: out_dir.to_path_buf(),
        artifacts: vec!["summary.json".into(), "summary.csv".into()],
        metrics: summary,
    })
}

/// Pull headline numbers out of an artifact JSON without copying megabytes.
fn extract_metrics(v: &serde_json::Value) -> serde_json::Value {
    let mut out = serde_json::Map::new();
    for key in ["mean_accuracy", "std_accuracy", "mean_adversarial", "mean_ablation", "axis"] {
        if let Some(x) = v.get(key) {
            out.insert(key.into(), x.clone());
        }
    }
    if let Some(rows) = v.get("rows").and_then(|r| r.as_array()) {
        let summary: Vec<serde_json::Value> = rows
            .iter()
            .map(|row| {
                serde_json::json!({
                    "label": row.get("label"),
                    "mean_accuracy": row.get("report").and_then(|r| r.get("mean_accuracy")),
                })
            })
            .collect();
        out.insert("rows".into(), serde_json::json!(summary));
    }
    if out.is_empty() {
        serde_json::json!({})
    } else {
        serde_json::Value::Object(out)
    }
}
