//! The alternating semi-supervised training loop.

use std::path::Path;

use serde_json::Value;

use crate::cohort::{DomainAssignment, DomainTag, Gender, Sample};
use crate::error::{Error, Result};
use crate::netcore::{checkpoint, GeneratorConfig, Generator, RmsProp, Tensor};
use crate::rng;

use super::heads::{DomainMode, HeadParams, Mlp};
use super::losses::{
    bce_grad_logit, loss_reconstruction, sigmoid, softmax_ce_grad_logits, softmax_rows,
    total_loss, LossComponents, LossWeights, PROB_CLAMP,
};
use super::{GenderMode, HeadSwitches, LossRecord, TrainConfig};

/// Samples partitioned by domain tag, ready for batching.
#[derive(Debug, Clone, Default)]
pub struct DomainPools {
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
    pub target: Vec<Sample>,
}

impl DomainPools {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.labeled.len(), self.unlabeled.len(), self.target.len())
    }
}

/// Partition tagged samples into per-domain pools under `assignment`.
pub fn build_pools(mut samples: Vec<Sample>, assignment: &DomainAssignment) -> Result<DomainPools> {
    assignment.validate()?;
    crate::cohort::tag_samples(&mut samples, assignment)?;
    let mut pools = DomainPools::default();
    for s in samples {
        match s.domain_tag {
            Some(DomainTag::LabeledSource) => pools.labeled.push(s),
            Some(DomainTag::UnlabeledSource) => pools.unlabeled.push(s),
            Some(DomainTag::Target) => pools.target.push(s),
            None => unreachable!("tag_samples stamps every sample"),
        }
    }
    if pools.labeled.is_empty() {
        return Err(Error::Contract("no labeled-source samples in the pools".into()));
    }
    Ok(pools)
}

/// One training batch: references into the domain pools.
#[derive(Debug, Clone, Default)]
pub struct StepBatch<'a> {
    pub labeled: Vec<&'a Sample>,
    pub unlabeled: Vec<&'a Sample>,
    pub target: Vec<&'a Sample>,
}

impl<'a> StepBatch<'a> {
    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len() + self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn iter_all(&self) -> impl Iterator<Item = &&'a Sample> {
        self.labeled.iter().chain(self.unlabeled.iter()).chain(self.target.iter())
    }
}

/// What one step produced: logged components (computed against the freshly
/// updated heads), the weighted total, and the gradients that were applied,
/// kept for contract tests.
#[derive(Debug)]
pub struct StepOutcome {
    pub components: LossComponents,
    pub total: f64,
    pub gen_grads: Generator,
    pub disease_grads: Mlp,
}

/// Owns the generator, the four heads and their optimizer states.
pub struct Trainer {
    pub gen: Generator,
    pub heads: HeadParams,
    cfg: TrainConfig,
    weights: LossWeights,
    switches: HeadSwitches,
    opt_gen: RmsProp,
    opt_signal: RmsProp,
    opt_gender: RmsProp,
    opt_domain: RmsProp,
    opt_disease: RmsProp,
    seed: u64,
    global_step: u64,
}

impl Trainer {
    pub fn new(
        gen_cfg: GeneratorConfig,
        cfg: TrainConfig,
        weights: LossWeights,
        switches: HeadSwitches,
        domain_mode: DomainMode,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        weights.validate()?;
        let mut gen_cfg = gen_cfg;
        gen_cfg.dropout_rate = cfg.dropout;
        let gen = Generator::new(gen_cfg, rng::derive_seed(seed, "generator", 0))?;
        let heads =
            HeadParams::new(&gen_cfg, cfg.head_hidden, domain_mode, rng::derive_seed(seed, "heads", 0))?;
        let mk = || RmsProp::new(cfg.lr, cfg.rmsprop_decay, cfg.rmsprop_eps, cfg.l2);
        Ok(Trainer {
            gen,
            heads,
            cfg,
            weights,
            switches,
            opt_gen: mk(),
            opt_signal: mk(),
            opt_gender: mk(),
            opt_domain: mk(),
            opt_disease: mk(),
            seed,
            global_step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    fn domain_class(&self, tag: DomainTag) -> usize {
        match self.heads.domain_mode {
            DomainMode::ThreeWay => tag.index(),
            // merged source vs target
            DomainMode::TwoWay => match tag {
                DomainTag::LabeledSource | DomainTag::UnlabeledSource => 0,
                DomainTag::Target => 1,
            },
        }
    }

    /// One alternating update: heads first, then the generator.
    pub fn train_step(&mut self, batch: &StepBatch<'_>) -> Result<StepOutcome> {
        if batch.is_empty() {
            return Err(Error::Contract("empty training batch".into()));
        }
        let (c, p) = (self.gen.config().channels, self.gen.config().points);
        let n_l = batch.labeled.len();
        let n = batch.len();
        for s in batch.labeled.iter() {
            if s.domain_tag != Some(DomainTag::LabeledSource) {
                return Err(Error::Contract(format!(
                    "sample of subject {} in the labeled sub-batch is not labeled-source",
                    s.subject_id
                )));
            }
        }

        // Stack inputs in labeled ++ unlabeled ++ target order.
        let mut xdata = Vec::with_capacity(n * c * p);
        let mut genders = Vec::with_capacity(n);
        let mut domain_classes = Vec::with_capacity(n);
        let mut y_labeled = Vec::with_capacity(n_l);
        for s in batch.iter_all() {
            if s.x.dim() != (c, p) {
                return Err(Error::Shape(format!(
                    "sample of subject {} has shape {:?}, expected ({c}, {p})",
                    s.subject_id,
                    s.x.dim()
                )));
            }
            xdata.extend(s.x.iter().copied());
            genders.push(s.gender);
            let tag = s.domain_tag.ok_or_else(|| {
                Error::Contract(format!("sample of subject {} is untagged", s.subject_id))
            })?;
            domain_classes.push(self.domain_class(tag));
        }
        for s in batch.labeled.iter() {
            y_labeled.push(s.disease.label());
        }
        let x = Tensor::from_vec(&[n, 1, c, p], xdata)?;

        let dropout_seed = rng::derive_seed(self.seed, "dropout-step", self.global_step);
        let trace = self.gen.forward_train(&x, dropout_seed)?;
        let recon = trace.reconstruction.data().to_vec();
        let feats = trace.flat.data().to_vec();
        let flat_len = self.gen.config().flat_len();
        let classes = self.heads.domain_mode.classes();
        let mut one_hot = vec![0.0; n * classes];
        for (i, &cls) in domain_classes.iter().enumerate() {
            one_hot[i * classes + cls] = 1.0;
        }

        // --- head updates (generator frozen) -----------------------------
        if self.switches.signal {
            let (zr, cache_r) = self.heads.signal_d.forward(x.data(), n);
            let (zf, cache_f) = self.heads.signal_d.forward(&recon, n);
            let mut g = self.heads.signal_d.zeros_like();
            let gzr: Vec<f64> =
                zr.iter().map(|&z| bce_grad_logit(sigmoid(z), 1.0) / n as f64).collect();
            let gzf: Vec<f64> =
                zf.iter().map(|&z| bce_grad_logit(sigmoid(z), 0.0) / n as f64).collect();
            self.heads.signal_d.backward(x.data(), &cache_r, &gzr, n, &mut g);
            self.heads.signal_d.backward(&recon, &cache_f, &gzf, n, &mut g);
            self.opt_signal.step(&mut self.heads.signal_d, &g)?;
        }
        if self.switches.gender {
            let (ze, cache) = self.heads.gender_e.forward(&feats, n);
            let mut g = self.heads.gender_e.zeros_like();
            let gz: Vec<f64> = ze
                .iter()
                .zip(&genders)
                .map(|(&z, &gen)| {
                    let target = if gen == Gender::Male { 1.0 } else { 0.0 };
                    bce_grad_logit(sigmoid(z), target)
                })
                .collect();
            self.heads.gender_e.backward(&feats, &cache, &gz, n, &mut g);
            self.opt_gender.step(&mut self.heads.gender_e, &g)?;
        }
        if self.switches.domain {
            let (zd, cache) = self.heads.domain_d.forward(&feats, n);
            let probs = softmax_rows(&zd, classes);
            let gz = softmax_ce_grad_logits(&probs, &one_hot, classes);
            let mut g = self.heads.domain_d.zeros_like();
            self.heads.domain_d.backward(&feats, &cache, &gz, n, &mut g);
            self.opt_domain.step(&mut self.heads.domain_d, &g)?;
        }
        let mut disease_grads = self.heads.disease_f.zeros_like();
        if n_l > 0 {
            let feats_l = &feats[..n_l * flat_len];
            let (zf, cache) = self.heads.disease_f.forward(feats_l, n_l);
            let gz: Vec<f64> = zf
                .iter()
                .zip(&y_labeled)
                .map(|(&z, &y)| bce_grad_logit(sigmoid(z), y))
                .collect();
            self.heads.disease_f.backward(feats_l, &cache, &gz, n_l, &mut disease_grads);
            self.opt_disease.step(&mut self.heads.disease_f, &disease_grads)?;
        }

        // --- generator update against the updated heads -------------------
        let w = self.weights;
        let mut g_recon = vec![0.0; n * c * p];
        let mut g_flat = vec![0.0; n * flat_len];
        let mut components = LossComponents::default();

        let rec_value = loss_reconstruction(x.data(), &recon, n)?;
        if w.lambda != 0.0 {
            let scale = w.lambda * 2.0 / n as f64;
            for i in 0..g_recon.len() {
                g_recon[i] += scale * (recon[i] - x.data()[i]);
            }
        }
        let mut signal_value = w.lambda * rec_value;
        if self.switches.signal {
            let (zf, cache) = self.heads.signal_d.forward(&recon, n);
            let mut adv = 0.0;
            let gz: Vec<f64> = zf
                .iter()
                .map(|&z| {
                    let prob = sigmoid(z);
                    adv -= prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln();
                    w.alpha * bce_grad_logit(prob, 1.0) / n as f64
                })
                .collect();
            adv /= n as f64;
            signal_value += adv;
            let mut scratch = self.heads.signal_d.zeros_like();
            let gi = self.heads.signal_d.backward(&recon, &cache, &gz, n, &mut scratch);
            for (a, b) in g_recon.iter_mut().zip(&gi) {
                *a += b;
            }
        }
        components.signal = signal_value;

        if self.switches.gender {
            let (ze, cache) = self.heads.gender_e.forward(&feats, n);
            let sign = match self.cfg.gender_mode {
                GenderMode::Invariance => -1.0,
                GenderMode::Cooperative => 1.0,
            };
            let mut value = 0.0;
            let gz: Vec<f64> = ze
                .iter()
                .zip(&genders)
                .map(|(&z, &gen)| {
                    let prob = sigmoid(z);
                    let target = if gen == Gender::Male { 1.0 } else { 0.0 };
                    let cp = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                    value -= target * cp.ln() + (1.0 - target) * (1.0 - cp).ln();
                    sign * w.beta * bce_grad_logit(prob, target)
                })
                .collect();
            components.gender = value;
            if w.beta != 0.0 {
                let mut scratch = self.heads.gender_e.zeros_like();
                let gi = self.heads.gender_e.backward(&feats, &cache, &gz, n, &mut scratch);
                for (a, b) in g_flat.iter_mut().zip(&gi) {
                    *a += b;
                }
            }
        }

        if self.switches.domain {
            let (zd, cache) = self.heads.domain_d.forward(&feats, n);
            let probs = softmax_rows(&zd, classes);
            components.domain = super::losses::loss_domain(&probs, &one_hot, classes)?;
            if w.delta != 0.0 {
                let mut gz = softmax_ce_grad_logits(&probs, &one_hot, classes);
                // always adversarial: the generator ascends the domain loss
                gz.iter_mut().for_each(|g| *g *= -w.delta);
                let mut scratch = self.heads.domain_d.zeros_like();
                let gi = self.heads.domain_d.backward(&feats, &cache, &gz, n, &mut scratch);
                for (a, b) in g_flat.iter_mut().zip(&gi) {
                    *a += b;
                }
            }
        }

        if n_l > 0 {
            let feats_l = &feats[..n_l * flat_len];
            let (zf, cache) = self.heads.disease_f.forward(feats_l, n_l);
            let mut value = 0.0;
            let gz: Vec<f64> = zf
                .iter()
                .zip(&y_labeled)
                .map(|(&z, &y)| {
                    let prob = sigmoid(z);
                    let cp = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                    value -= y * cp.ln() + (1.0 - y) * (1.0 - cp).ln();
                    w.theta * bce_grad_logit(prob, y)
                })
                .collect();
            components.disease = value;
            if w.theta != 0.0 {
                let mut scratch = self.heads.disease_f.zeros_like();
                let gi = self.heads.disease_f.backward(feats_l, &cache, &gz, n_l, &mut scratch);
                for (a, b) in g_flat[..n_l * flat_len].iter_mut().zip(&gi) {
                    *a += b;
                }
            }
        }

        let gen_grads = self.gen.backward(&trace, Some(&g_recon), Some(&g_flat))?;
        self.opt_gen.step(&mut self.gen, &gen_grads)?;
        self.global_step += 1;

        let total = total_loss(&components, &w);
        Ok(StepOutcome { components, total, gen_grads, disease_grads })
    }

    /// Run the full schedule over the pools. Returns one record per epoch.
    pub fn train(&mut self, pools: &DomainPools) -> Result<Vec<LossRecord>> {
        let epochs = self.cfg.epochs;
        let steps = pools.labeled.len().div_ceil(self.cfg.batch_labeled).max(1);
        let mut records = Vec::with_capacity(epochs);
        let mut initial_total: Option<f64> = None;
        for epoch in 0..epochs {
            let order_l = epoch_order(pools.labeled.len(), steps * self.cfg.batch_labeled, self.seed, "shuffle-labeled", epoch);
            let order_u = epoch_order(pools.unlabeled.len(), steps * self.cfg.batch_unlabeled, self.seed, "shuffle-unlabeled", epoch);
            let order_t = if self.cfg.include_target {
                epoch_order(pools.target.len(), steps * self.cfg.batch_target, self.seed, "shuffle-target", epoch)
            } else {
                Vec::new()
            };
            let mut sums = LossComponents::default();
            for s in 0..steps {
                let batch = StepBatch {
                    labeled: take(&pools.labeled, &order_l, s, self.cfg.batch_labeled),
                    unlabeled: take(&pools.unlabeled, &order_u, s, self.cfg.batch_unlabeled),
                    target: take(&pools.target, &order_t, s, self.cfg.batch_target),
                };
                let out = self.train_step(&batch)?;
                let init = *initial_total.get_or_insert(out.total);
                if out.total.abs() > self.cfg.divergence_factor * init.abs().max(1.0) {
                    return Err(Error::Diverged(format!(
                        "total loss {} exceeds {} x initial {init} at epoch {epoch}",
                        out.total, self.cfg.divergence_factor
                    )));
                }
                sums.signal += out.components.signal;
                sums.gender += out.components.gender;
                sums.domain += out.components.domain;
                sums.disease += out.components.disease;
            }
            let k = steps as f64;
            let mean = LossComponents {
                signal: sums.signal / k,
                gender: sums.gender / k,
                domain: sums.domain / k,
                disease: sums.disease / k,
            };
            records.push(LossRecord {
                epoch,
                signal: mean.signal,
                gender: mean.gender,
                domain: mean.domain,
                disease: mean.disease,
                total: total_loss(&mean, &self.weights),
            });
        }
        Ok(records)
    }
}

/// Concatenated seeded shuffles of `0..len`, long enough to serve `needed`
/// draws. Empty pools yield an empty order.
fn epoch_order(len: usize, needed: usize, seed: u64, tag: &str, epoch: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    if len == 0 || needed == 0 {
        return Vec::new();
    }
    let mut order = Vec::with_capacity(needed + len);
    let mut round = 0u64;
    while order.len() < needed {
        let mut idx: Vec<usize> = (0..len).collect();
        let mut r = rng::stream(seed, tag, (epoch as u64) << 20 | round);
        idx.shuffle(&mut r);
        order.extend(idx);
        round += 1;
    }
    order
}

fn take<'a>(pool: &'a [Sample], order: &[usize], step: usize, k: usize) -> Vec<&'a Sample> {
    if pool.is_empty() || k == 0 || order.is_empty() {
        return Vec::new();
    }
    order[step * k..(step + 1) * k].iter().map(|&i| &pool[i]).collect()
}

/// Eval-mode latent features for a list of samples, in chunks.
pub fn features_eval(gen: &Generator, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let (c, p) = (gen.config().channels, gen.config().points);
    let flat = gen.config().flat_len();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let mut xdata = Vec::with_capacity(chunk.len() * c * p);
        for s in chunk {
            if s.x.dim() != (c, p) {
                return Err(Error::Shape(format!(
                    "sample of subject {} has shape {:?}, expected ({c}, {p})",
                    s.subject_id,
                    s.x.dim()
                )));
            }
            xdata.extend(s.x.iter().copied());
        }
        let x = Tensor::from_vec(&[chunk.len(), 1, c, p], xdata)?;
        let trace = gen.forward_eval(&x)?;
        for i in 0..chunk.len() {
            out.push(trace.flat.data()[i * flat..(i + 1) * flat].to_vec());
        }
    }
    Ok(out)
}

/// Disease predictions (`true` = DN+) from eval-mode features.
pub fn predict_disease(gen: &Generator, heads: &HeadParams, samples: &[Sample]) -> Result<Vec<bool>> {
    let feats = features_eval(gen, samples)?;
    let flat = gen.config().flat_len();
    let mut preds = Vec::with_capacity(samples.len());
    for f in &feats {
        debug_assert_eq!(f.len(), flat);
        let (z, _) = heads.disease_f.forward(f, 1);
        preds.push(sigmoid(z[0]) > 0.5);
    }
    Ok(preds)
}

/// Save generator + heads into one checkpoint file.
pub fn save_model(
    path: impl AsRef<Path>,
    gen: &Generator,
    heads: &HeadParams,
    extra: Value,
) -> Result<()> {
    let mut tensors: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, t) in gen.named_tensors() {
        tensors.push((format!("gen.{name}"), t));
    }
    for (name, t) in gen.state_tensors() {
        tensors.push((format!("gen_state.{name}"), t));
    }
    for (name, t) in heads.named_tensors() {
        tensors.push((format!("heads.{name}"), t));
    }
    let meta = serde_json::json!({
        "generator": gen.config(),
        "head_hidden": heads.gender_e.hidden,
        "domain_mode": heads.domain_mode,
        "extra": extra,
    });
    checkpoint::save(path, &meta, &tensors)
}

/// Load a model checkpoint saved by [`save_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<(Generator, HeadParams, Value)> {
    let (meta, tensors) = checkpoint::load(path)?;
    let gen_cfg: GeneratorConfig = serde_json::from_value(
        meta.get("generator").cloned().ok_or_else(|| Error::Data("checkpoint lacks generator config".into()))?,
    )
    .map_err(|e| Error::json("checkpoint generator config", e))?;
    let head_hidden = meta
        .get("head_hidden")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Data("checkpoint lacks head_hidden".into()))? as usize;
    let domain_mode: DomainMode = serde_json::from_value(
        meta.get("domain_mode").cloned().ok_or_else(|| Error::Data("checkpoint lacks domain_mode".into()))?,
    )
    .map_err(|e| Error::json("checkpoint domain mode", e))?;
    let mut gen = Generator::new(gen_cfg, 0)?;
    let mut heads = HeadParams::new(&gen_cfg, head_hidden, domain_mode, 0)?;
    let mut gen_tensors = Vec::new();
    let mut state_tensors = Vec::new();
    let mut head_tensors = Vec::new();
    for (name, t) in tensors {
        if let Some(rest) = name.strip_prefix("gen_state.") {
            state_tensors.push((rest.to_string(), t));
        } else if let Some(rest) = name.strip_prefix("gen.") {
            gen_tensors.push((rest.to_string(), t));
        } else if let Some(rest) = name.strip_prefix("heads.") {
            head_tensors.push((rest.to_string(), t));
        }
    }
    gen_tensors.extend(state_tensors);
    gen.load_tensors(&gen_tensors)?;
    heads.load_tensors(&head_tensors)?;
    let extra = meta.get("extra").cloned().unwrap_or(Value::Null);
    Ok((gen, heads, extra))
}
