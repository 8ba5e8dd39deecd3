//! The CNN–BiGRU encoder-decoder generator.
//!
//! The architecture follows the reference layer table exactly: a temporal
//! convolution and a spatial convolution with batch norms, max-pooled twice
//! with recorded indices, a separable (depthwise + pointwise) convolution in
//! between; then per-step linears around two bidirectional GRUs producing
//! the latent sequence and its flattened feature vector; then the mirrored
//! decoder (max-unpooling with the encoder's indices, transposed
//! convolutions) reconstructing the input. See [`Generator::table_rows`] for
//! the full registry with kernel shapes and parameter counts.

pub mod checkpoint;
pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use optim::RmsProp;
pub use tensor::Tensor;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use gru::{BiGru, BiGruCache};
use layers::*;

/// Feature maps after the first temporal convolution.
const F1: usize = 16;
/// Feature maps after the spatial convolution.
const F2: usize = 32;
/// First pooling width.
const POOL1: usize = 4;
/// Second pooling width.
const POOL2: usize = 8;
/// GRU hidden units per direction, and the latent feature width.
const HIDDEN: usize = 16;

/// Shape configuration of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    /// EEG channels `C`.
    pub channels: usize,
    /// Sampling points per second `P`.
    pub points: usize,
    pub dropout_rate: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { channels: 63, points: 384, dropout_rate: 0.25 }
    }
}

impl GeneratorConfig {
    /// The reference configuration: 63 channels at 384 points per second.
    pub fn reference() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("generator needs at least one channel".into()));
        }
        if self.points == 0 || self.points % (POOL1 * POOL2) != 0 {
            return Err(Error::Config(format!(
                "points per second {} must be a positive multiple of {}",
                self.points,
                POOL1 * POOL2
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout rate must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Kernel width of the first temporal convolution (`P/2 + 1`, odd).
    pub fn temporal_kernel_1(&self) -> usize {
        self.points / 2 + 1
    }

    /// Kernel width of the separable convolution (`P/8 + 1`, odd).
    pub fn temporal_kernel_2(&self) -> usize {
        self.points / 8 + 1
    }

    /// Sequence length after both pooling stages (`M`).
    pub fn seq_len(&self) -> usize {
        self.points / (POOL1 * POOL2)
    }

    /// Latent feature width (`F`).
    pub fn feature_width(&self) -> usize {
        HIDDEN
    }

    /// Flattened latent size `M * F`.
    pub fn flat_len(&self) -> usize {
        self.seq_len() * self.feature_width()
    }
}

/// All generator weights. A zeroed clone of this struct doubles as the
/// gradient holder (see [`Generator::zeros_like`]); parameter and gradient
/// tensors are enumerated in the same registry order.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: GeneratorConfig,
    conv1: Conv2dTemporal,
    bn1: BatchNorm2d,
    conv_spatial: Conv2dSpatial,
    bn2: BatchNorm2d,
    conv_dw: DepthwiseConv,
    conv_pw: PointwiseConv,
    bn3: BatchNorm2d,
    lin_in: Linear,
    gru_enc: BiGru,
    lin_latent: Linear,
    lin_dec_in: Linear,
    gru_dec: BiGru,
    lin_dec_out: Linear,
    convt_pw: PointwiseConvT,
    convt_dw: DepthwiseConvT,
    bn4: BatchNorm2d,
    convt_spatial: ConvTSpatial,
    bn5: BatchNorm2d,
    convt_temporal: ConvTTemporal,
}

/// One registry row: layer label, kernel shape, output shape for a given
/// batch size, and trainable parameter count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub layer: String,
    pub kernel: Option<[usize; 2]>,
    pub output_shape: Vec<usize>,
    pub params: usize,
}

/// Everything one forward pass produces: the spec-visible tensors plus the
/// caches the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub batch: usize,
    pub training: bool,
    /// Post-encoder feature sequence `[B, M, F]`.
    pub feature_seq: Tensor,
    /// Concatenated BiGRU hidden states `[B, M, 2F]`.
    pub bigru_concat: Tensor,
    /// Latent sequence `[B, M, F]`.
    pub latent: Tensor,
    /// Row-major flattening of the latent sequence, `[B, M*F]`.
    pub flat: Tensor,
    /// Reconstruction `[B, 1, C, P]`.
    pub reconstruction: Tensor,
    /// Argmax indices of the two pooling stages.
    pub pool1_indices: Vec<u32>,
    pub pool2_indices: Vec<u32>,
    /// Output shape of each registry row as executed (input row included).
    pub row_shapes: Vec<(String, Vec<usize>)>,

    // backward caches
    x_in: Vec<f64>,
    bn1_cache: Option<BnCache>,
    bn1_out: Vec<f64>,
    bn2_cache: Option<BnCache>,
    drop1_factors: Option<Vec<f64>>,
    drop1_out: Vec<f64>,
    conv_dw_out: Vec<f64>,
    bn3_cache: Option<BnCache>,
    lin_in_out: Vec<f64>,
    gru_enc_cache: Option<BiGruCache>,
    lin_dec_in_out: Vec<f64>,
    gru_dec_cache: Option<BiGruCache>,
    gru_dec_out: Vec<f64>,
    unpool2_out: Vec<f64>,
    convt_pw_out: Vec<f64>,
    bn4_cache: Option<BnCache>,
    drop2_factors: Option<Vec<f64>>,
    unpool1_out: Vec<f64>,
    bn5_cache: Option<BnCache>,
    bn5_out: Vec<f64>,
}

fn finite(v: &[f64], row: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        Err(Error::NonFinite(format!("non-finite activation after layer {row}")))
    } else {
        Ok(())
    }
}

/// Transpose `[B, ch, L]` (channel-major) to `[B, L, ch]` (step-major).
fn chw_to_seq(x: &[f64], b: usize, ch: usize, l: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for bi in 0..b {
        for c in 0..ch {
            for t in 0..l {
                y[(bi * l + t) * ch + c] = x[(bi * ch + c) * l + t];
            }
        }
    }
    y
}

/// Transpose `[B, L, ch]` back to `[B, ch, L]`.
fn seq_to_chw(x: &[f64], b: usize, ch: usize, l: usize) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for bi in 0..b {
        for c in 0..ch {
            for t in 0..l {
                y[(bi * ch + c) * l + t] = x[(bi * l + t) * ch + c];
            }
        }
    }
    y
}

enum FwdMode {
    Train { dropout_seed: u64 },
    Eval,
}

impl Generator {
    /// Build a generator with seeded uniform fan-in initialization, zero
    /// biases and identity batch norms.
    pub fn new(cfg: GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (c, k1, k2) = (cfg.channels, cfg.temporal_kernel_1(), cfg.temporal_kernel_2());
        let mut g = Generator {
            cfg,
            conv1: Conv2dTemporal::new(F1, k1),
            bn1: BatchNorm2d::new(F1),
            conv_spatial: Conv2dSpatial::new(F1, F2, c),
            bn2: BatchNorm2d::new(F2),
            conv_dw: DepthwiseConv::new(F2, k2),
            conv_pw: PointwiseConv::new(F2, F1),
            bn3: BatchNorm2d::new(F1),
            lin_in: Linear::new(HIDDEN, HIDDEN),
            gru_enc: BiGru::new(HIDDEN, HIDDEN),
            lin_latent: Linear::new(2 * HIDDEN, HIDDEN),
            lin_dec_in: Linear::new(HIDDEN, 2 * HIDDEN),
            gru_dec: BiGru::new(2 * HIDDEN, HIDDEN),
            lin_dec_out: Linear::new(2 * HIDDEN, HIDDEN),
            convt_pw: PointwiseConvT::new(F1, F2),
            convt_dw: DepthwiseConvT::new(F2, k2),
            bn4: BatchNorm2d::new(F2),
            convt_spatial: ConvTSpatial::new(F2, F1, c),
            bn5: BatchNorm2d::new(F1),
            convt_temporal: ConvTTemporal::new(F1, k1),
        };
        let mut r = rng::stream(seed, "generator-init", 0);
        g.init_weights(&mut r);
        Ok(g)
    }

    fn init_weights(&mut self, r: &mut ChaCha8Rng) {
        let c = self.cfg.channels;
        init_uniform(r, &mut self.conv1.w, self.conv1.k);
        init_uniform(r, &mut self.conv_spatial.w, F1 * c);
        init_uniform(r, &mut self.conv_dw.w, self.conv_dw.k);
        init_uniform(r, &mut self.conv_pw.w, F2);
        init_uniform(r, &mut self.lin_in.w, self.lin_in.in_f);
        self.gru_enc.init(r);
        init_uniform(r, &mut self.lin_latent.w, self.lin_latent.in_f);
        init_uniform(r, &mut self.lin_dec_in.w, self.lin_dec_in.in_f);
        self.gru_dec.init(r);
        init_uniform(r, &mut self.lin_dec_out.w, self.lin_dec_out.in_f);
        init_uniform(r, &mut self.convt_pw.w, F1);
        init_uniform(r, &mut self.convt_dw.w, self.convt_dw.k);
        init_uniform(r, &mut self.convt_spatial.w, F2);
        init_uniform(r, &mut self.convt_temporal.w, F1 * self.convt_temporal.k);
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    /// A same-shaped generator with every tensor zeroed, used as a gradient
    /// or optimizer-state holder.
    pub fn zeros_like(&self) -> Generator {
        let mut g = self.clone();
        g.visit_mut(|_, _, t| t.iter_mut().for_each(|v| *v = 0.0));
        for bn in [&mut g.bn1, &mut g.bn2, &mut g.bn3, &mut g.bn4, &mut g.bn5] {
            bn.running_mean.iter_mut().for_each(|v| *v = 0.0);
            bn.running_var.iter_mut().for_each(|v| *v = 0.0);
        }
        g
    }

    /// Visit every trainable tensor in registry order.
    pub fn visit<'a, F: FnMut(&'static str, ParamKind, &'a [f64])>(&'a self, mut f: F) {
        use ParamKind::*;
        f("conv1.w", Weight, &self.conv1.w);
        f("conv1.b", Bias, &self.conv1.b);
        f("bn1.gamma", BnGamma, &self.bn1.gamma);
        f("bn1.beta", BnBeta, &self.bn1.beta);
        f("conv_spatial.w", Weight, &self.conv_spatial.w);
        f("conv_spatial.b", Bias, &self.conv_spatial.b);
        f("bn2.gamma", BnGamma, &self.bn2.gamma);
        f("bn2.beta", BnBeta, &self.bn2.beta);
        f("conv_dw.w", Weight, &self.conv_dw.w);
        f("conv_dw.b", Bias, &self.conv_dw.b);
        f("conv_pw.w", Weight, &self.conv_pw.w);
        f("conv_pw.b", Bias, &self.conv_pw.b);
        f("bn3.gamma", BnGamma, &self.bn3.gamma);
        f("bn3.beta", BnBeta, &self.bn3.beta);
        f("lin_in.w", Weight, &self.lin_in.w);
        f("lin_in.b", Bias, &self.lin_in.b);
        f("gru_enc.fwd.w_ih", Weight, &self.gru_enc.fwd.w_ih);
        f("gru_enc.fwd.w_hh", Weight, &self.gru_enc.fwd.w_hh);
        f("gru_enc.fwd.b_ih", Bias, &self.gru_enc.fwd.b_ih);
        f("gru_enc.fwd.b_hh", Bias, &self.gru_enc.fwd.b_hh);
        f("gru_enc.bwd.w_ih", Weight, &self.gru_enc.bwd.w_ih);
        f("gru_enc.bwd.w_hh", Weight, &self.gru_enc.bwd.w_hh);
        f("gru_enc.bwd.b_ih", Bias, &self.gru_enc.bwd.b_ih);
        f("gru_enc.bwd.b_hh", Bias, &self.gru_enc.bwd.b_hh);
        f("lin_latent.w", Weight, &self.lin_latent.w);
        f("lin_latent.b", Bias, &self.lin_latent.b);
        f("lin_dec_in.w", Weight, &self.lin_dec_in.w);
        f("lin_dec_in.b", Bias, &self.lin_dec_in.b);
        f("gru_dec.fwd.w_ih", Weight, &self.gru_dec.fwd.w_ih);
        f("gru_dec.fwd.w_hh", Weight, &self.gru_dec.fwd.w_hh);
        f("gru_dec.fwd.b_ih", Bias, &self.gru_dec.fwd.b_ih);
        f("gru_dec.fwd.b_hh", Bias, &self.gru_dec.fwd.b_hh);
        f("gru_dec.bwd.w_ih", Weight, &self.gru_dec.bwd.w_ih);
        f("gru_dec.bwd.w_hh", Weight, &self.gru_dec.bwd.w_hh);
        f("gru_dec.bwd.b_ih", Bias, &self.gru_dec.bwd.b_ih);
        f("gru_dec.bwd.b_hh", Bias, &self.gru_dec.bwd.b_hh);
        f("lin_dec_out.w", Weight, &self.lin_dec_out.w);
        f("lin_dec_out.b", Bias, &self.lin_dec_out.b);
        f("convt_pw.w", Weight, &self.convt_pw.w);
        f("convt_pw.b", Bias, &self.convt_pw.b);
        f("convt_dw.w", Weight, &self.convt_dw.w);
        f("convt_dw.b", Bias, &self.convt_dw.b);
        f("bn4.gamma", BnGamma, &self.bn4.gamma);
        f("bn4.beta", BnBeta, &self.bn4.beta);
        f("convt_spatial.w", Weight, &self.convt_spatial.w);
        f("convt_spatial.b", Bias, &self.convt_spatial.b);
        f("bn5.gamma", BnGamma, &self.bn5.gamma);
        f("bn5.beta", BnBeta, &self.bn5.beta);
        f("convt_temporal.w", Weight, &self.convt_temporal.w);
        f("convt_temporal.b", Bias, &self.convt_temporal.b);
    }

    /// Visit every trainable tensor mutably, in the same order as
    /// [`Generator::visit`].
    pub fn visit_mut<F: FnMut(&'static str, ParamKind, &mut [f64])>(&mut self, mut f: F) {
        use ParamKind::*;
        f("conv1.w", Weight, &mut self.conv1.w);
        f("conv1.b", Bias, &mut self.conv1.b);
        f("bn1.gamma", BnGamma, &mut self.bn1.gamma);
        f("bn1.beta", BnBeta, &mut self.bn1.beta);
        f("conv_spatial.w", Weight, &mut self.conv_spatial.w);
        f("conv_spatial.b", Bias, &mut self.conv_spatial.b);
        f("bn2.gamma", BnGamma, &mut self.bn2.gamma);
        f("bn2.beta", BnBeta, &mut self.bn2.beta);
        f("conv_dw.w", Weight, &mut self.conv_dw.w);
        f("conv_dw.b", Bias, &mut self.conv_dw.b);
        f("conv_pw.w", Weight, &mut self.conv_pw.w);
        f("conv_pw.b", Bias, &mut self.conv_pw.b);
        f("bn3.gamma", BnGamma, &mut self.bn3.gamma);
        f("bn3.beta", BnBeta, &mut self.bn3.beta);
        f("lin_in.w", Weight, &mut self.lin_in.w);
        f("lin_in.b", Bias, &mut self.lin_in.b);
        f("gru_enc.fwd.w_ih", Weight, &mut self.gru_enc.fwd.w_ih);
        f("gru_enc.fwd.w_hh", Weight, &mut self.gru_enc.fwd.w_hh);
        f("gru_enc.fwd.b_ih", Bias, &mut self.gru_enc.fwd.b_ih);
        f("gru_enc.fwd.b_hh", Bias, &mut self.gru_enc.fwd.b_hh);
        f("gru_enc.bwd.w_ih", Weight, &mut self.gru_enc.bwd.w_ih);
        f("gru_enc.bwd.w_hh", Weight, &mut self.gru_enc.bwd.w_hh);
        f("gru_enc.bwd.b_ih", Bias, &mut self.gru_enc.bwd.b_ih);
        f("gru_enc.bwd.b_hh", Bias, &mut self.gru_enc.bwd.b_hh);
        f("lin_latent.w", Weight, &mut self.lin_latent.w);
        f("lin_latent.b", Bias, &mut self.lin_latent.b);
        f("lin_dec_in.w", Weight, &mut self.lin_dec_in.w);
        f("lin_dec_in.b", Bias, &mut self.lin_dec_in.b);
        f("gru_dec.fwd.w_ih", Weight, &mut self.gru_dec.fwd.w_ih);
        f("gru_dec.fwd.w_hh", Weight, &mut self.gru_dec.fwd.w_hh);
        f("gru_dec.fwd.b_ih", Bias, &mut self.gru_dec.fwd.b_ih);
        f("gru_dec.fwd.b_hh", Bias, &mut self.gru_dec.fwd.b_hh);
        f("gru_dec.bwd.w_ih", Weight, &mut self.gru_dec.bwd.w_ih);
        f("gru_dec.bwd.w_hh", Weight, &mut self.gru_dec.bwd.w_hh);
        f("gru_dec.bwd.b_ih", Bias, &mut self.gru_dec.bwd.b_ih);
        f("gru_dec.bwd.b_hh", Bias, &mut self.gru_dec.bwd.b_hh);
        f("lin_dec_out.w", Weight, &mut self.lin_dec_out.w);
        f("lin_dec_out.b", Bias, &mut self.lin_dec_out.b);
        f("convt_pw.w", Weight, &mut self.convt_pw.w);
        f("convt_pw.b", Bias, &mut self.convt_pw.b);
        f("convt_dw.w", Weight, &mut self.convt_dw.w);
        f("convt_dw.b", Bias, &mut self.convt_dw.b);
        f("bn4.gamma", BnGamma, &mut self.bn4.gamma);
        f("bn4.beta", BnBeta, &mut self.bn4.beta);
        f("convt_spatial.w", Weight, &mut self.convt_spatial.w);
        f("convt_spatial.b", Bias, &mut self.convt_spatial.b);
        f("bn5.gamma", BnGamma, &mut self.bn5.gamma);
        f("bn5.beta", BnBeta, &mut self.bn5.beta);
        f("convt_temporal.w", Weight, &mut self.convt_temporal.w);
        f("convt_temporal.b", Bias, &mut self.convt_temporal.b);
    }

    /// Named views of every trainable tensor.
    pub fn named_tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        self.visit(|name, _, t| out.push((name.to_string(), t.to_vec())));
        out
    }

    /// Batch-norm running statistics (non-trainable state, checkpointed).
    pub fn state_tensors(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (name, bn) in
            [("bn1", &self.bn1), ("bn2", &self.bn2), ("bn3", &self.bn3), ("bn4", &self.bn4), ("bn5", &self.bn5)]
        {
            out.push((format!("{name}.running_mean"), bn.running_mean.clone()));
            out.push((format!("{name}.running_var"), bn.running_var.clone()));
        }
        out
    }

    /// Restore trainable tensors and running statistics by name.
    pub fn load_tensors(&mut self, tensors: &[(String, Vec<f64>)]) -> Result<()> {
        let lookup: std::collections::BTreeMap<&str, &Vec<f64>> =
            tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut missing = Vec::new();
        self.visit_mut(|name, _, t| match lookup.get(name) {
            Some(src) if src.len() == t.len() => t.copy_from_slice(src),
            _ => missing.push(name.to_string()),
        });
        for (name, bn) in [
            ("bn1", &mut self.bn1),
            ("bn2", &mut self.bn2),
            ("bn3", &mut self.bn3),
            ("bn4", &mut self.bn4),
            ("bn5", &mut self.bn5),
        ] {
            for (suffix, dst) in
                [("running_mean", &mut bn.running_mean), ("running_var", &mut bn.running_var)]
            {
                let key = format!("{name}.{suffix}");
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

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _, t| n += t.len());
        n
    }

    /// The full 25-row layer registry for a given batch size: layer label,
    /// kernel shape, output shape and per-layer parameter count.
    pub fn table_rows(&self, b: usize) -> Vec<TableRow> {
        let (c, p) = (self.cfg.channels, self.cfg.points);
        let (k1, k2) = (self.cfg.temporal_kernel_1(), self.cfg.temporal_kernel_2());
        let m = self.cfg.seq_len();
        let p4 = p / POOL1;
        let row = |layer: &str, kernel: Option<[usize; 2]>, shape: &[usize], params: usize| TableRow {
            layer: layer.to_string(),
            kernel,
            output_shape: shape.to_vec(),
            params,
        };
        vec![
            row("Conv2d: 1-1", Some([1, k1]), &[b, F1, c, p], self.conv1.param_count()),
            row("BatchNorm2d: 1-2", None, &[b, F1, c, p], self.bn1.param_count()),
            row("Conv2d: 1-3", Some([c, 1]), &[b, F2, 1, p], self.conv_spatial.param_count()),
            row("BatchNorm2d: 1-4", None, &[b, F2, 1, p], self.bn2.param_count()),
            row("MaxPool2d: 1-5", Some([1, POOL1]), &[b, F2, 1, p4], 0),
            row("Dropout: 1-6", None, &[b, F2, 1, p4], 0),
            row("Conv2d: 1-7", Some([1, k2]), &[b, F2, 1, p4], self.conv_dw.param_count()),
            row("Conv2d: 1-8", Some([1, 1]), &[b, F1, 1, p4], self.conv_pw.param_count()),
            row("BatchNorm2d: 1-9", None, &[b, F1, 1, p4], self.bn3.param_count()),
            row("MaxPool2d: 1-10", Some([1, POOL2]), &[b, F1, 1, m], 0),
            row("Linear: 1-11", None, &[b, m, HIDDEN], self.lin_in.param_count()),
            row("GRU: 1-12", None, &[b, m, 2 * HIDDEN], self.gru_enc.param_count()),
            row("Linear: 1-13", None, &[b, m, HIDDEN], self.lin_latent.param_count()),
            row("Linear: 1-14", None, &[b, m, 2 * HIDDEN], self.lin_dec_in.param_count()),
            row("GRU: 1-15", None, &[b, m, 2 * HIDDEN], self.gru_dec.param_count()),
            row("Linear: 1-16", None, &[b, m, HIDDEN], self.lin_dec_out.param_count()),
            row("MaxUnpool2d: 1-17", Some([1, POOL2]), &[b, F1, 1, p4], 0),
            row("ConvTranspose2d: 1-18", Some([1, 1]), &[b, F2, 1, p4], self.convt_pw.param_count()),
            row("ConvTranspose2d: 1-19", Some([1, k2]), &[b, F2, 1, p4], self.convt_dw.param_count()),
            row("BatchNorm2d: 1-20", None, &[b, F2, 1, p4], self.bn4.param_count()),
            row("Dropout: 1-21", None, &[b, F2, 1, p4], 0),
            row("MaxUnpool2d: 1-22", Some([1, POOL1]), &[b, F2, 1, p], 0),
            row("ConvTranspose2d: 1-23", Some([c, 1]), &[b, F1, c, p], self.convt_spatial.param_count()),
            row("BatchNorm2d: 1-24", None, &[b, F1, c, p], self.bn5.param_count()),
            row("ConvTranspose2d: 1-25", Some([1, k1]), &[b, 1, c, p], self.convt_temporal.param_count()),
        ]
    }

    /// Training-mode forward: seeded dropout, batch statistics, running-stat
    /// update. The returned trace carries everything `backward` needs.
    pub fn forward_train(&mut self, x: &Tensor, dropout_seed: u64) -> Result<ForwardTrace> {
        let (trace, updates) = self.forward_impl(x, FwdMode::Train { dropout_seed })?;
        let updates = updates.expect("training forward produces running updates");
        for (bn, upd) in [
            (&mut self.bn1, &updates[0]),
            (&mut self.bn2, &updates[1]),
            (&mut self.bn3, &updates[2]),
            (&mut self.bn4, &updates[3]),
            (&mut self.bn5, &updates[4]),
        ] {
            bn.apply_running(upd);
        }
        Ok(trace)
    }

    /// Eval-mode forward: a pure function of the parameters and input
    /// (dropout is the identity, batch norm uses running statistics).
    pub fn forward_eval(&self, x: &Tensor) -> Result<ForwardTrace> {
        Ok(self.forward_impl(x, FwdMode::Eval)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn forward_impl(
        &self,
        x: &Tensor,
        mode: FwdMode,
    ) -> Result<(ForwardTrace, Option<Vec<Vec<(f64, f64)>>>)> {
        let (c, p) = (self.cfg.channels, self.cfg.points);
        if x.shape().len() != 4 || x.shape()[1] != 1 || x.shape()[2] != c || x.shape()[3] != p {
            return Err(Error::Shape(format!(
                "generator input must be [B, 1, {c}, {p}], got {:?}",
                x.shape()
            )));
        }
        x.check_finite("generator input")?;
        let b = x.shape()[0];
        let m = self.cfg.seq_len();
        let p4 = p / POOL1;
        let training = matches!(mode, FwdMode::Train { .. });
        let mut drop_rng = match mode {
            FwdMode::Train { dropout_seed } => Some(rng::stream(dropout_seed, "dropout", 0)),
            FwdMode::Eval => None,
        };
        let mut rows: Vec<(String, Vec<usize>)> = Vec::with_capacity(26);
        let mut bn_updates: Vec<Vec<(f64, f64)>> = Vec::with_capacity(5);
        rows.push(("Input".into(), vec![b, 1, c, p]));

        let xd = x.data();

        // -- encoder ---------------------------------------------------------
        let conv1_out = self.conv1.forward(xd, b, c, p);
        finite(&conv1_out, "Conv2d: 1-1")?;
        rows.push(("Conv2d: 1-1".into(), vec![b, F1, c, p]));

        let (bn1_out, bn1_cache) = self.bn_forward(&self.bn1, &conv1_out, b, c * p, training, &mut bn_updates);
        finite(&bn1_out, "BatchNorm2d: 1-2")?;
        rows.push(("BatchNorm2d: 1-2".into(), vec![b, F1, c, p]));

        let conv_spatial_out = self.conv_spatial.forward(&bn1_out, b, p);
        finite(&conv_spatial_out, "Conv2d: 1-3")?;
        rows.push(("Conv2d: 1-3".into(), vec![b, F2, 1, p]));

        let (bn2_out, bn2_cache) = self.bn_forward(&self.bn2, &conv_spatial_out, b, p, training, &mut bn_updates);
        finite(&bn2_out, "BatchNorm2d: 1-4")?;
        rows.push(("BatchNorm2d: 1-4".into(), vec![b, F2, 1, p]));

        let (pool1_out, pool1_indices) = max_pool_width(&bn2_out, b * F2, p, POOL1);
        rows.push(("MaxPool2d: 1-5".into(), vec![b, F2, 1, p4]));

        let (drop1_out, drop1_factors) = self.dropout(&pool1_out, &mut drop_rng);
        rows.push(("Dropout: 1-6".into(), vec![b, F2, 1, p4]));

        let conv_dw_out = self.conv_dw.forward(&drop1_out, b, p4);
        finite(&conv_dw_out, "Conv2d: 1-7")?;
        rows.push(("Conv2d: 1-7".into(), vec![b, F2, 1, p4]));

        let conv_pw_out = self.conv_pw.forward(&conv_dw_out, b, p4);
        finite(&conv_pw_out, "Conv2d: 1-8")?;
        rows.push(("Conv2d: 1-8".into(), vec![b, F1, 1, p4]));

        let (bn3_out, bn3_cache) = self.bn_forward(&self.bn3, &conv_pw_out, b, p4, training, &mut bn_updates);
        finite(&bn3_out, "BatchNorm2d: 1-9")?;
        rows.push(("BatchNorm2d: 1-9".into(), vec![b, F1, 1, p4]));

        let (pool2_out, pool2_indices) = max_pool_width(&bn3_out, b * F1, p4, POOL2);
        rows.push(("MaxPool2d: 1-10".into(), vec![b, F1, 1, m]));

        // [B, F, M] -> [B, M, F]: the post-encoder feature sequence.
        let feature_seq_v = chw_to_seq(&pool2_out, b, F1, m);

        let lin_in_out = self.lin_in.forward(&feature_seq_v, b * m);
        finite(&lin_in_out, "Linear: 1-11")?;
        rows.push(("Linear: 1-11".into(), vec![b, m, HIDDEN]));

        let (bigru_concat_v, gru_enc_cache) = self.gru_enc.forward(&lin_in_out, b, m);
        finite(&bigru_concat_v, "GRU: 1-12")?;
        rows.push(("GRU: 1-12".into(), vec![b, m, 2 * HIDDEN]));

        let latent_v = self.lin_latent.forward(&bigru_concat_v, b * m);
        finite(&latent_v, "Linear: 1-13")?;
        rows.push(("Linear: 1-13".into(), vec![b, m, HIDDEN]));

        // -- decoder ---------------------------------------------------------
        let lin_dec_in_out = self.lin_dec_in.forward(&latent_v, b * m);
        finite(&lin_dec_in_out, "Linear: 1-14")?;
        rows.push(("Linear: 1-14".into(), vec![b, m, 2 * HIDDEN]));

        let (gru_dec_out, gru_dec_cache) = self.gru_dec.forward(&lin_dec_in_out, b, m);
        finite(&gru_dec_out, "GRU: 1-15")?;
        rows.push(("GRU: 1-15".into(), vec![b, m, 2 * HIDDEN]));

        let lin_dec_out_out = self.lin_dec_out.forward(&gru_dec_out, b * m);
        finite(&lin_dec_out_out, "Linear: 1-16")?;
        rows.push(("Linear: 1-16".into(), vec![b, m, HIDDEN]));

        let dec_chw = seq_to_chw(&lin_dec_out_out, b, F1, m);
        let unpool2_out = max_unpool_width(&dec_chw, &pool2_indices, b * F1, p4, POOL2)?;
        rows.push(("MaxUnpool2d: 1-17".into(), vec![b, F1, 1, p4]));

        let convt_pw_out = self.convt_pw.forward(&unpool2_out, b, p4);
        finite(&convt_pw_out, "ConvTranspose2d: 1-18")?;
        rows.push(("ConvTranspose2d: 1-18".into(), vec![b, F2, 1, p4]));

        let convt_dw_out = self.convt_dw.forward(&convt_pw_out, b, p4);
        finite(&convt_dw_out, "ConvTranspose2d: 1-19")?;
        rows.push(("ConvTranspose2d: 1-19".into(), vec![b, F2, 1, p4]));

        let (bn4_out, bn4_cache) = self.bn_forward(&self.bn4, &convt_dw_out, b, p4, training, &mut bn_updates);
        finite(&bn4_out, "BatchNorm2d: 1-20")?;
        rows.push(("BatchNorm2d: 1-20".into(), vec![b, F2, 1, p4]));

        let (drop2_out, drop2_factors) = self.dropout(&bn4_out, &mut drop_rng);
        rows.push(("Dropout: 1-21".into(), vec![b, F2, 1, p4]));

        let unpool1_out = max_unpool_width(&drop2_out, &pool1_indices, b * F2, p, POOL1)?;
        rows.push(("MaxUnpool2d: 1-22".into(), vec![b, F2, 1, p]));

        let convt_spatial_out = self.convt_spatial.forward(&unpool1_out, b, p);
        finite(&convt_spatial_out, "ConvTranspose2d: 1-23")?;
        rows.push(("ConvTranspose2d: 1-23".into(), vec![b, F1, c, p]));

        let (bn5_out, bn5_cache) = self.bn_forward(&self.bn5, &convt_spatial_out, b, c * p, training, &mut bn_updates);
        finite(&bn5_out, "BatchNorm2d: 1-24")?;
        rows.push(("BatchNorm2d: 1-24".into(), vec![b, F1, c, p]));

        let recon = self.convt_temporal.forward(&bn5_out, b, c, p);
        finite(&recon, "ConvTranspose2d: 1-25")?;
        rows.push(("ConvTranspose2d: 1-25".into(), vec![b, 1, c, p]));

        let flat = Tensor::from_vec(&[b, m * HIDDEN], latent_v.clone())?;
        let trace = ForwardTrace {
            batch: b,
            training,
            feature_seq: Tensor::from_vec(&[b, m, HIDDEN], feature_seq_v)?,
            bigru_concat: Tensor::from_vec(&[b, m, 2 * HIDDEN], bigru_concat_v.clone())?,
            latent: Tensor::from_vec(&[b, m, HIDDEN], latent_v)?,
            flat,
            reconstruction: Tensor::from_vec(&[b, 1, c, p], recon)?,
            pool1_indices,
            pool2_indices,
            row_shapes: rows,
            x_in: xd.to_vec(),
            bn1_cache,
            bn1_out,
            bn2_cache,
            drop1_factors,
            drop1_out,
            conv_dw_out,
            bn3_cache,
            lin_in_out,
            gru_enc_cache: Some(gru_enc_cache),
            lin_dec_in_out,
            gru_dec_cache: Some(gru_dec_cache),
            gru_dec_out,
            unpool2_out,
            convt_pw_out,
            bn4_cache,
            drop2_factors,
            unpool1_out,
            bn5_cache,
            bn5_out,
        };
        Ok((trace, training.then_some(bn_updates)))
    }

    fn bn_forward(
        &self,
        bn: &BatchNorm2d,
        x: &[f64],
        b: usize,
        spatial: usize,
        training: bool,
        updates: &mut Vec<Vec<(f64, f64)>>,
    ) -> (Vec<f64>, Option<BnCache>) {
        if training {
            let (y, cache, upd) = bn.forward_train(x, b, spatial);
            updates.push(upd);
            (y, Some(cache))
        } else {
            (bn.forward_eval(x, b, spatial), None)
        }
    }

    fn dropout(
        &self,
        x: &[f64],
        rng: &mut Option<ChaCha8Rng>,
    ) -> (Vec<f64>, Option<Vec<f64>>) {
        match rng {
            Some(r) if self.cfg.dropout_rate > 0.0 => {
                let (y, factors) = dropout_train(x, self.cfg.dropout_rate, r);
                (y, Some(factors))
            }
            _ => (x.to_vec(), None),
        }
    }

    /// Exact reverse-mode gradients of a scalar loss whose adjoints w.r.t.
    /// the reconstruction and/or the flattened latent are given. Requires a
    /// training-mode trace. Returns a zeroed-clone gradient holder.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        grad_reconstruction: Option<&[f64]>,
        grad_flat: Option<&[f64]>,
    ) -> Result<Generator> {
        if !trace.training {
            return Err(Error::Contract(
                "backward requires a training-mode forward trace".into(),
            ));
        }
        let b = trace.batch;
        let (c, p) = (self.cfg.channels, self.cfg.points);
        let m = self.cfg.seq_len();
        let p4 = p / POOL1;
        let mut grads = self.zeros_like();

        // Gradient reaching the latent sequence 1-13 output.
        let mut g_latent = vec![0.0; b * m * HIDDEN];
        if let Some(gf) = grad_flat {
            if gf.len() != g_latent.len() {
                return Err(Error::Shape(format!(
                    "grad_flat has {} elements, expected {}",
                    gf.len(),
                    g_latent.len()
                )));
            }
            g_latent.copy_from_slice(gf);
        }

        if let Some(gr) = grad_reconstruction {
            if gr.len() != b * c * p {
                return Err(Error::Shape(format!(
                    "grad_reconstruction has {} elements, expected {}",
                    gr.len(),
                    b * c * p
                )));
            }
            // -- decoder backward --------------------------------------------
            let g_bn5_out =
                self.convt_temporal.backward(&trace.bn5_out, gr, b, c, p, &mut grads.convt_temporal);
            let g_convt_spatial_out = self.bn5.backward(
                trace.bn5_cache.as_ref().expect("train cache"),
                &g_bn5_out,
                b,
                c * p,
                &mut grads.bn5,
            );
            let g_unpool1_out =
                self.convt_spatial.backward(&trace.unpool1_out, &g_convt_spatial_out, b, p, &mut grads.convt_spatial);
            let g_drop2_out = max_unpool_backward(&g_unpool1_out, &trace.pool1_indices, b * F2, p4);
            let g_bn4_out = apply_dropout_grad(&g_drop2_out, &trace.drop2_factors);
            let g_convt_dw_out = self.bn4.backward(
                trace.bn4_cache.as_ref().expect("train cache"),
                &g_bn4_out,
                b,
                p4,
                &mut grads.bn4,
            );
            let g_convt_pw_out =
                self.convt_dw.backward(&trace.convt_pw_out, &g_convt_dw_out, b, p4, &mut grads.convt_dw);
            let g_unpool2_out =
                self.convt_pw.backward(&trace.unpool2_out, &g_convt_pw_out, b, p4, &mut grads.convt_pw);
            // unpool2's input was the [B, F, M] view of the decoder sequence.
            let g_dec_chw = max_unpool_backward(&g_unpool2_out, &trace.pool2_indices, b * F1, m);
            let g_lin_dec_out_out = chw_to_seq(&g_dec_chw, b, F1, m);
            let g_gru_dec_out =
                self.lin_dec_out.backward(&trace.gru_dec_out, &g_lin_dec_out_out, b * m, &mut grads.lin_dec_out);
            let g_lin_dec_in_out = self.gru_dec.backward(
                &trace.lin_dec_in_out,
                trace.gru_dec_cache.as_ref().expect("train cache"),
                &g_gru_dec_out,
                b,
                m,
                &mut grads.gru_dec,
            );
            let g_latent_from_dec = self.lin_dec_in.backward(
                trace.latent.data(),
                &g_lin_dec_in_out,
                b * m,
                &mut grads.lin_dec_in,
            );
            for (a, g) in g_latent.iter_mut().zip(&g_latent_from_dec) {
                *a += g;
            }
        }

        // -- encoder backward -------------------------------------------------
        let g_bigru_concat = self.lin_latent.backward(
            trace.bigru_concat.data(),
            &g_latent,
            b * m,
            &mut grads.lin_latent,
        );
        let g_lin_in_out = self.gru_enc.backward(
            &trace.lin_in_out,
            trace.gru_enc_cache.as_ref().expect("train cache"),
            &g_bigru_concat,
            b,
            m,
            &mut grads.gru_enc,
        );
        let g_feature_seq =
            self.lin_in.backward(trace.feature_seq.data(), &g_lin_in_out, b * m, &mut grads.lin_in);
        let g_pool2_out = seq_to_chw(&g_feature_seq, b, F1, m);
        let g_bn3_out = max_pool_backward(&g_pool2_out, &trace.pool2_indices, b * F1, p4, POOL2);
        let g_conv_pw_out = self.bn3.backward(
            trace.bn3_cache.as_ref().expect("train cache"),
            &g_bn3_out,
            b,
            p4,
            &mut grads.bn3,
        );
        let g_conv_dw_out =
            self.conv_pw.backward(&trace.conv_dw_out, &g_conv_pw_out, b, p4, &mut grads.conv_pw);
        let g_drop1_out =
            self.conv_dw.backward(&trace.drop1_out, &g_conv_dw_out, b, p4, &mut grads.conv_dw);
        let g_pool1_out = apply_dropout_grad(&g_drop1_out, &trace.drop1_factors);
        let g_bn2_out = max_pool_backward(&g_pool1_out, &trace.pool1_indices, b * F2, p, POOL1);
        let g_conv_spatial_out = self.bn2.backward(
            trace.bn2_cache.as_ref().expect("train cache"),
            &g_bn2_out,
            b,
            p,
            &mut grads.bn2,
        );
        let g_bn1_out =
            self.conv_spatial.backward(&trace.bn1_out, &g_conv_spatial_out, b, p, &mut grads.conv_spatial);
        let g_conv1_out = self.bn1.backward(
            trace.bn1_cache.as_ref().expect("train cache"),
            &g_bn1_out,
            b,
            c * p,
            &mut grads.bn1,
        );
        let _ = self.conv1.backward(&trace.x_in, &g_conv1_out, b, c, p, &mut grads.conv1);

        grads.check_finite()?;
        Ok(grads)
    }

    /// Error naming the first tensor containing a non-finite gradient.
    pub fn check_finite(&self) -> Result<()> {
        let mut bad: Option<String> = None;
        self.visit(|name, _, t| {
            if bad.is_none() && t.iter().any(|v| !v.is_finite()) {
                bad = Some(name.to_string());
            }
        });
        match bad {
            Some(name) => Err(Error::NonFinite(format!("non-finite gradient in {name}"))),
            None => Ok(()),
        }
    }
}

impl optim::ParamPairs for Generator {
    fn visit_pair_mut<F: FnMut(&str, ParamKind, &mut [f64], &[f64])>(
        &mut self,
        grads: &Self,
        mut f: F,
    ) {
        let mut gs: Vec<(&'static str, &[f64])> = Vec::with_capacity(52);
        grads.visit(|name, _, t| gs.push((name, t)));
        let mut i = 0;
        self.visit_mut(|name, kind, p| {
            let (gname, g) = gs[i];
            debug_assert_eq!(name, gname);
            f(name, kind, p, g);
            i += 1;
        });
    }
}

fn apply_dropout_grad(gy: &[f64], factors: &Option<Vec<f64>>) -> Vec<f64> {
    match factors {
        Some(f) => gy.iter().zip(f).map(|(g, s)| g * s).collect(),
        None => gy.to_vec(),
    }
}

/// Unflatten a `[B, M*F]` gradient or feature back to `[B, M, F]`; the two
/// layouts share memory order, so this is a shape relabeling.
pub fn unflatten(flat: &Tensor, m: usize, f: usize) -> Result<Tensor> {
    let b = flat.shape()[0];
    if flat.shape().len() != 2 || flat.shape()[1] != m * f {
        return Err(Error::Shape(format!(
            "cannot unflatten {:?} into [{b}, {m}, {f}]",
            flat.shape()
        )));
    }
    Tensor::from_vec(&[b, m, f], flat.data().to_vec())
}
