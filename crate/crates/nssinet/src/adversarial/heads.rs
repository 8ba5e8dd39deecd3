//! Discriminator heads: small fully connected networks with one ReLU layer.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::layers::{init_uniform, ParamKind};
use crate::netcore::optim::ParamPairs;
use crate::netcore::GeneratorConfig;
use crate::rng;

/// `input -> hidden ReLU -> output` multilayer perceptron, returning raw
/// logits; the loss layer applies the logistic or softmax link.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub in_f: usize,
    pub hidden: usize,
    pub out_f: usize,
    pub w1: Vec<f64>, // [hidden][in]
    pub b1: Vec<f64>,
    pub w2: Vec<f64>, // [out][hidden]
    pub b2: Vec<f64>,
}

/// Hidden activations cached for backprop.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub h: Vec<f64>, // [rows][hidden], post-ReLU
}

impl Mlp {
    pub fn new(in_f: usize, hidden: usize, out_f: usize) -> Self {
        Mlp {
            in_f,
            hidden,
            out_f,
            w1: vec![0.0; hidden * in_f],
            b1: vec![0.0; hidden],
            w2: vec![0.0; out_f * hidden],
            b2: vec![0.0; out_f],
        }
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        init_uniform(rng, &mut self.w1, self.in_f);
        init_uniform(rng, &mut self.w2, self.hidden);
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn zeros_like(&self) -> Mlp {
        let mut m = self.clone();
        for t in [&mut m.w1, &mut m.b1, &mut m.w2, &mut m.b2] {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        m
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> (Vec<f64>, MlpCache) {
        let (inf, hid, outf) = (self.in_f, self.hidden, self.out_f);
        debug_assert_eq!(x.len(), rows * inf);
        let mut h = vec![0.0; rows * hid];
        for r in 0..rows {
            let xrow = &x[r * inf..(r + 1) * inf];
            for u in 0..hid {
                let wrow = &self.w1[u * inf..(u + 1) * inf];
                let mut acc = self.b1[u];
                for i in 0..inf {
                    acc += wrow[i] * xrow[i];
                }
                h[r * hid + u] = acc.max(0.0);
            }
        }
        let mut z = vec![0.0; rows * outf];
        for r in 0..rows {
            let hrow = &h[r * hid..(r + 1) * hid];
            for o in 0..outf {
                let wrow = &self.w2[o * hid..(o + 1) * hid];
                let mut acc = self.b2[o];
                for u in 0..hid {
                    acc += wrow[u] * hrow[u];
                }
                z[r * outf + o] = acc;
            }
        }
        (z, MlpCache { h })
    }

    /// Backprop from logit gradients; accumulates into `grads` and returns
    /// the gradient w.r.t. the input.
    pub fn backward(
        &self,
        x: &[f64],
        cache: &MlpCache,
        g_logits: &[f64],
        rows: usize,
        grads: &mut Mlp,
    ) -> Vec<f64> {
        let (inf, hid, outf) = (self.in_f, self.hidden, self.out_f);
        let mut gx = vec![0.0; rows * inf];
        let mut gh = vec![0.0; rows * hid];
        for r in 0..rows {
            let hrow = &cache.h[r * hid..(r + 1) * hid];
            let ghrow = &mut gh[r * hid..(r + 1) * hid];
            for o in 0..outf {
                let g = g_logits[r * outf + o];
                if g == 0.0 {
                    continue;
                }
                grads.b2[o] += g;
                let wrow = &self.w2[o * hid..(o + 1) * hid];
                let gwrow = &mut grads.w2[o * hid..(o + 1) * hid];
                for u in 0..hid {
                    gwrow[u] += g * hrow[u];
                    ghrow[u] += g * wrow[u];
                }
            }
        }
        for r in 0..rows {
            let xrow = &x[r * inf..(r + 1) * inf];
            let gxrow = &mut gx[r * inf..(r + 1) * inf];
            let hrow = &cache.h[r * hid..(r + 1) * hid];
            for u in 0..hid {
                // ReLU gate
                let g = if hrow[u] > 0.0 { gh[r * hid + u] } else { 0.0 };
                if g == 0.0 {
                    continue;
                }
                grads.b1[u] += g;
                let wrow = &self.w1[u * inf..(u + 1) * inf];
                let gwrow = &mut grads.w1[u * inf..(u + 1) * inf];
                for i in 0..inf {
                    gwrow[i] += g * xrow[i];
                    gxrow[i] += g * wrow[i];
                }
            }
        }
        gx
    }

    pub fn visit<'a, F: FnMut(&'static str, ParamKind, &'a [f64])>(&'a self, mut f: F) {
        f("w1", ParamKind::Weight, &self.w1);
        f("b1", ParamKind::Bias, &self.b1);
        f("w2", ParamKind::Weight, &self.w2);
        f("b2", ParamKind::Bias, &self.b2);
    }
}

impl ParamPairs for Mlp {
    fn visit_pair_mut<F: FnMut(&str, ParamKind, &mut [f64], &[f64])>(
        &mut self,
        grads: &Self,
        mut f: F,
    ) {
        f("w1", ParamKind::Weight, &mut self.w1, &grads.w1);
        f("b1", ParamKind::Bias, &mut self.b1, &grads.b1);
        f("w2", ParamKind::Weight, &mut self.w2, &grads.w2);
        f("b2", ParamKind::Bias, &mut self.b2, &grads.b2);
    }
}

/// How many classes the domain head distinguishes. The traditional-domain
/// ablation merges labeled and unlabeled source into one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainMode {
    ThreeWay,
    TwoWay,
}

impl DomainMode {
    pub fn classes(self) -> usize {
        match self {
            DomainMode::ThreeWay => 3,
            DomainMode::TwoWay => 2,
        }
    }
}

/// The four discriminator heads. The signal head sees flattened
/// reconstructions (`C*P`), the other three see the flattened latent
/// features (`M*F`).
#[derive(Debug, Clone)]
pub struct HeadParams {
    pub signal_d: Mlp,
    pub gender_e: Mlp,
    pub domain_d: Mlp,
    pub disease_f: Mlp,
    pub domain_mode: DomainMode,
}

impl HeadParams {
    pub fn new(cfg: &GeneratorConfig, hidden: usize, domain_mode: DomainMode, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Config("head hidden width must be positive".into()));
        }
        let flat = cfg.flat_len();
        let signal_in = cfg.channels * cfg.points;
        let mut heads = HeadParams {
            signal_d: Mlp::new(signal_in, hidden, 1),
            gender_e: Mlp::new(flat, hidden, 1),
            domain_d: Mlp::new(flat, hidden, domain_mode.classes()),
            disease_f: Mlp::new(flat, hidden, 1),
            domain_mode,
        };
        let mut r = rng::stream(seed, "head-init", 0);
        heads.signal_d.init(&mut r);
        heads.gender_e.init(&mut r);
        heads.domain_d.init(&mut r);
        heads.disease_f.init(&mut r);
        Ok(heads)
    }

    pub fn param_count(&self) -> usize {
        self.signal_d.param_count()
            + self.gender_e.param_count()
            + self.domain_d.param_count()
            + self.disease_f.param_count()
    }

    pub fn named_tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (prefix, mlp) in [
            ("signal_d", &self.signal_d),
            ("gender_e", &self.gender_e),
            ("domain_d", &self.domain_d),
            ("disease_f", &self.disease_f),
        ] {
            mlp.visit(|name, _, t| out.push((format!("{prefix}.{name}"), t.to_vec())));
        }
        out
    }

    pub fn load_tensors(&mut self, tensors: &[(String, Vec<f64>)]) -> Result<()> {
        let lookup: std::collections::BTreeMap<&str, &Vec<f64>> =
            tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut missing = Vec::new();
        for (prefix, mlp) in [
            ("signal_d", &mut self.signal_d),
            ("gender_e", &mut self.gender_e),
            ("domain_d", &mut self.domain_d),
            ("disease_f", &mut self.disease_f),
        ] {
            for (name, dst) in [
                ("w1", &mut mlp.w1),
                ("b1", &mut mlp.b1),
                ("w2", &mut mlp.w2),
                ("b2", &mut mlp.b2),
            ] {
                let key = format!("{prefix}.{name}");
                match lookup.get(key.as_str()) {
                    Some(src) if src.len() == dst.len() => dst.copy_from_slice(src),
                    _ => missing.push(key),
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Data(format!("checkpoint is missing or mismatches tensors: {missing:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_dimensions_match_reference_config() {
        let cfg = GeneratorConfig::reference();
        let heads = HeadParams::new(&cfg, 64, DomainMode::ThreeWay, 0).unwrap();
        assert_eq!(heads.gender_e.in_f, 192);
        assert_eq!(heads.domain_d.in_f, 192);
        assert_eq!(heads.disease_f.in_f, 192);
        assert_eq!(heads.signal_d.in_f, 63 * 384);
        assert_eq!(heads.domain_d.out_f, 3);
        assert_eq!(heads.gender_e.out_f, 1);
    }

    #[test]
    fn mlp_forward_is_relu_network() {
        let mut m = Mlp::new(2, 2, 1);
        m.w1 = vec![1.0, 0.0, -1.0, 1.0];
        m.b1 = vec![0.0, 0.5];
        m.w2 = vec![1.0, 2.0];
        m.b2 = vec![-0.25];
        // x = [1, 2]: h = [relu(1), relu(1.5)] = [1, 1.5]; z = 1 + 3 - 0.25
        let (z, cache) = m.forward(&[1.0, 2.0], 1);
        assert!((z[0] - 3.75).abs() < 1e-12);
        assert_eq!(cache.h, vec![1.0, 1.5]);
    }
}
