//! Layer kernels with handwritten forward and adjoint passes.
//!
//! Conventions: activations are flat `f64` slices in row-major
//! `[batch][channel][height][width]` (convolutional stages) or
//! `[batch][step][feature]` (sequence stages) order. Every backward routine
//! takes the cached forward input, accumulates parameter gradients into a
//! same-shaped grads struct, and returns the gradient w.r.t. its input.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// What a parameter tensor is, for optimizer policy (weight decay applies to
/// weights only) and for checkpoint naming.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    BnGamma,
    BnBeta,
}

pub(crate) fn init_uniform(rng: &mut ChaCha8Rng, data: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in data.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
}

// ---------------------------------------------------------------------------
// Temporal convolution over the width axis, same padding, in_ch = 1.
// ---------------------------------------------------------------------------

/// `[B,1,C,P] -> [B,out,C,P]`, kernel `[1,k]`, odd `k`, symmetric padding.
#[derive(Debug, Clone)]
pub struct Conv2dTemporal {
    pub out_ch: usize,
    pub k: usize,
    pub w: Vec<f64>, // [out][k]
    pub b: Vec<f64>, // [out]
}

impl Conv2dTemporal {
    pub fn new(out_ch: usize, k: usize) -> Self {
        Conv2dTemporal { out_ch, k, w: vec![0.0; out_ch * k], b: vec![0.0; out_ch] }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &[f64], b: usize, c: usize, p: usize) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let mut y = vec![0.0; b * self.out_ch * c * p];
        for bi in 0..b {
            for o in 0..self.out_ch {
                let wrow = &self.w[o * self.k..(o + 1) * self.k];
                let bias = self.b[o];
                for ch in 0..c {
                    let xrow = &x[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                    let yrow = &mut y[((bi * self.out_ch + o) * c + ch) * p
                        ..((bi * self.out_ch + o) * c + ch + 1) * p];
                    for t in 0..p {
                        let mut acc = bias;
                        let lo = t.saturating_sub(pad);
                        let hi = (t + pad).min(p - 1);
                        for s in lo..=hi {
                            acc += xrow[s] * wrow[s + pad - t];
                        }
                        yrow[t] = acc;
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        gy: &[f64],
        b: usize,
        c: usize,
        p: usize,
        grads: &mut Conv2dTemporal,
    ) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let mut gx = vec![0.0; b * c * p];
        for bi in 0..b {
            for o in 0..self.out_ch {
                let wrow = &self.w[o * self.k..(o + 1) * self.k];
                let gwrow = &mut grads.w[o * self.k..(o + 1) * self.k];
                for ch in 0..c {
                    let xrow = &x[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                    let gyrow = &gy[((bi * self.out_ch + o) * c + ch) * p
                        ..((bi * self.out_ch + o) * c + ch + 1) * p];
                    let gxrow = &mut gx[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                    for t in 0..p {
                        let g = gyrow[t];
                        if g == 0.0 {
                            continue;
                        }
                        grads.b[o] += g;
                        let lo = t.saturating_sub(pad);
                        let hi = (t + pad).min(p - 1);
                        for s in lo..=hi {
                            gwrow[s + pad - t] += g * xrow[s];
                            gxrow[s] += g * wrow[s + pad - t];
                        }
                    }
                }
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// Spatial convolution collapsing the channel/height axis, valid padding.
// ---------------------------------------------------------------------------

/// `[B,in,C,P] -> [B,out,1,P]`, kernel `[C,1]`.
#[derive(Debug, Clone)]
pub struct Conv2dSpatial {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub w: Vec<f64>, // [out][in][kh]
    pub b: Vec<f64>, // [out]
}

impl Conv2dSpatial {
    pub fn new(in_ch: usize, out_ch: usize, kh: usize) -> Self {
        Conv2dSpatial {
            in_ch,
            out_ch,
            kh,
            w: vec![0.0; out_ch * in_ch * kh],
            b: vec![0.0; out_ch],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &[f64], b: usize, p: usize) -> Vec<f64> {
        let (ic, oc, kh) = (self.in_ch, self.out_ch, self.kh);
        let mut y = vec![0.0; b * oc * p];
        for bi in 0..b {
            for o in 0..oc {
                let yrow = &mut y[(bi * oc + o) * p..(bi * oc + o + 1) * p];
                yrow.iter_mut().for_each(|v| *v = self.b[o]);
                for i in 0..ic {
                    for h in 0..kh {
                        let wv = self.w[(o * ic + i) * kh + h];
                        if wv == 0.0 {
                            continue;
                        }
                        let xrow = &x[((bi * ic + i) * kh + h) * p..((bi * ic + i) * kh + h + 1) * p];
                        for t in 0..p {
                            yrow[t] += wv * xrow[t];
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        gy: &[f64],
        b: usize,
        p: usize,
        grads: &mut Conv2dSpatial,
    ) -> Vec<f64> {
        let (ic, oc, kh) = (self.in_ch, self.out_ch, self.kh);
        let mut gx = vec![0.0; b * ic * kh * p];
        for bi in 0..b {
            for o in 0..oc {
                let gyrow = &gy[(bi * oc + o) * p..(bi * oc + o + 1) * p];
                grads.b[o] += gyrow.iter().sum::<f64>();
                for i in 0..ic {
                    for h in 0..kh {
                        let widx = (o * ic + i) * kh + h;
                        let wv = self.w[widx];
                        let xrow =
                            &x[((bi * ic + i) * kh + h) * p..((bi * ic + i) * kh + h + 1) * p];
                        let gxrow = &mut gx[((bi * ic + i) * kh + h) * p
                            ..((bi * ic + i) * kh + h + 1) * p];
                        let mut gw = 0.0;
                        for t in 0..p {
                            gw += gyrow[t] * xrow[t];
                            gxrow[t] += gyrow[t] * wv;
                        }
                        grads.w[widx] += gw;
                    }
                }
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// Batch normalization over (batch x spatial) per channel.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub ch: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Per-channel statistics cached by a training-mode forward.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Normalized activations, same layout as the input.
    pub xhat: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(ch: usize) -> Self {
        BatchNorm2d {
            ch,
            gamma: vec![1.0; ch],
            beta: vec![0.0; ch],
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    /// Training forward over `b` batches of `spatial` elements per channel.
    /// Returns the output, the backward cache, and the (mean, unbiased var)
    /// to fold into the running statistics.
    pub fn forward_train(
        &self,
        x: &[f64],
        b: usize,
        spatial: usize,
    ) -> (Vec<f64>, BnCache, Vec<(f64, f64)>) {
        let c = self.ch;
        let n = (b * spatial) as f64;
        let mut y = vec![0.0; x.len()];
        let mut cache = BnCache {
            mean: vec![0.0; c],
            inv_std: vec![0.0; c],
            xhat: vec![0.0; x.len()],
        };
        let mut running = Vec::with_capacity(c);
        for ci in 0..c {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for bi in 0..b {
                let row = &x[(bi * c + ci) * spatial..(bi * c + ci + 1) * spatial];
                for &v in row {
                    sum += v;
                    sumsq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sumsq / n - mean * mean).max(0.0);
            let inv_std = 1.0 / (var + self.eps).sqrt();
            cache.mean[ci] = mean;
            cache.inv_std[ci] = inv_std;
            let unbiased = if n > 1.0 { var * n / (n - 1.0) } else { var };
            running.push((mean, unbiased));
            let (g, be) = (self.gamma[ci], self.beta[ci]);
            for bi in 0..b {
                let base = (bi * c + ci) * spatial;
                for s in 0..spatial {
                    let xh = (x[base + s] - mean) * inv_std;
                    cache.xhat[base + s] = xh;
                    y[base + s] = g * xh + be;
                }
            }
        }
        (y, cache, running)
    }

    pub fn apply_running(&mut self, updates: &[(f64, f64)]) {
        for (ci, (mean, var)) in updates.iter().enumerate() {
            self.running_mean[ci] = (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * mean;
            self.running_var[ci] = (1.0 - self.momentum) * self.running_var[ci] + self.momentum * var;
        }
    }

    pub fn forward_eval(&self, x: &[f64], b: usize, spatial: usize) -> Vec<f64> {
        let c = self.ch;
        let mut y = vec![0.0; x.len()];
        for ci in 0..c {
            let inv_std = 1.0 / (self.running_var[ci] + self.eps).sqrt();
            let (g, be, mean) = (self.gamma[ci], self.beta[ci], self.running_mean[ci]);
            for bi in 0..b {
                let base = (bi * c + ci) * spatial;
                for s in 0..spatial {
                    y[base + s] = g * (x[base + s] - mean) * inv_std + be;
                }
            }
        }
        y
    }

    /// Backward through a training-mode forward.
    pub fn backward(
        &self,
        cache: &BnCache,
        gy: &[f64],
        b: usize,
        spatial: usize,
        grads: &mut BatchNorm2d,
    ) -> Vec<f64> {
        let c = self.ch;
        let n = (b * spatial) as f64;
        let mut gx = vec![0.0; gy.len()];
        for ci in 0..c {
            let mut sum_gy = 0.0;
            let mut sum_gy_xhat = 0.0;
            for bi in 0..b {
                let base = (bi * c + ci) * spatial;
                for s in 0..spatial {
                    let g = gy[base + s];
                    sum_gy += g;
                    sum_gy_xhat += g * cache.xhat[base + s];
                }
            }
            grads.gamma[ci] += sum_gy_xhat;
            grads.beta[ci] += sum_gy;
            let coeff = self.gamma[ci] * cache.inv_std[ci] / n;
            for bi in 0..b {
                let base = (bi * c + ci) * spatial;
                for s in 0..spatial {
                    gx[base + s] = coeff
                        * (n * gy[base + s] - sum_gy - cache.xhat[base + s] * sum_gy_xhat);
                }
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// Max pooling / unpooling over the width axis with recorded argmax indices.
// ---------------------------------------------------------------------------

/// Pool `[.., len] -> [.., len/w]`; ties break to the lowest index. Returns
/// the pooled values and, per output element, the absolute input offset of
/// its argmax within the pooled row.
pub fn max_pool_width(x: &[f64], rows: usize, len: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    debug_assert_eq!(len % w, 0);
    let out_len = len / w;
    let mut y = vec![0.0; rows * out_len];
    let mut idx = vec![0u32; rows * out_len];
    for r in 0..rows {
        let xrow = &x[r * len..(r + 1) * len];
        for o in 0..out_len {
            let start = o * w;
            let mut best = xrow[start];
            let mut best_i = start;
            for i in start + 1..start + w {
                if xrow[i] > best {
                    best = xrow[i];
                    best_i = i;
                }
            }
            y[r * out_len + o] = best;
            idx[r * out_len + o] = best_i as u32;
        }
    }
    (y, idx)
}

/// Inverse of [`max_pool_width`]: places each value at its recorded index,
/// zero elsewhere. Rejects indices that do not belong to their window.
pub fn max_unpool_width(
    y: &[f64],
    idx: &[u32],
    rows: usize,
    out_len: usize,
    w: usize,
) -> Result<Vec<f64>> {
    let in_len = out_len / w;
    if y.len() != rows * in_len || idx.len() != y.len() {
        return Err(Error::Contract(format!(
            "unpool got {} values / {} indices for {} rows of {}",
            y.len(),
            idx.len(),
            rows,
            in_len
        )));
    }
    let mut x = vec![0.0; rows * out_len];
    for r in 0..rows {
        for o in 0..in_len {
            let i = idx[r * in_len + o] as usize;
            let window = o * w..(o + 1) * w;
            if !window.contains(&i) {
                return Err(Error::Contract(format!(
                    "stale unpool index {i} outside window {window:?}"
                )));
            }
            x[r * out_len + i] = y[r * in_len + o];
        }
    }
    Ok(x)
}

/// Backward of pooling: route the output gradient to the argmax positions.
pub fn max_pool_backward(gy: &[f64], idx: &[u32], rows: usize, in_len: usize, w: usize) -> Vec<f64> {
    let out_len = in_len / w;
    let mut gx = vec![0.0; rows * in_len];
    for r in 0..rows {
        for o in 0..out_len {
            gx[r * in_len + idx[r * out_len + o] as usize] += gy[r * out_len + o];
        }
    }
    gx
}

/// Backward of unpooling: gather the gradient from the scattered positions.
pub fn max_unpool_backward(gx_out: &[f64], idx: &[u32], rows: usize, in_len: usize) -> Vec<f64> {
    let out_len = gx_out.len() / rows;
    let mut gy = vec![0.0; rows * in_len];
    for r in 0..rows {
        for o in 0..in_len {
            gy[r * in_len + o] = gx_out[r * out_len + idx[r * in_len + o] as usize];
        }
    }
    gy
}

// ---------------------------------------------------------------------------
// Dropout with inverted scaling and a seeded mask.
// ---------------------------------------------------------------------------

/// Returns the dropped activations and the per-element factors (0 or
/// 1/(1-rate)) used, which the backward pass reuses.
pub fn dropout_train(x: &[f64], rate: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mut y = vec![0.0; x.len()];
    let mut factors = vec![0.0; x.len()];
    for i in 0..x.len() {
        let keep_it: f64 = rng.gen::<f64>();
        if keep_it < keep {
            factors[i] = scale;
            y[i] = x[i] * scale;
        }
    }
    (y, factors)
}

// ---------------------------------------------------------------------------
// Per-step linear layer on sequences.
// ---------------------------------------------------------------------------

/// `[rows, in_f] -> [rows, out_f]`, `y = x W^T + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_f: usize,
    pub out_f: usize,
    pub w: Vec<f64>, // [out][in]
    pub b: Vec<f64>, // [out]
}

impl Linear {
    pub fn new(in_f: usize, out_f: usize) -> Self {
        Linear { in_f, out_f, w: vec![0.0; out_f * in_f], b: vec![0.0; out_f] }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (inf, outf) = (self.in_f, self.out_f);
        let mut y = vec![0.0; rows * outf];
        for r in 0..rows {
            let xrow = &x[r * inf..(r + 1) * inf];
            for o in 0..outf {
                let wrow = &self.w[o * inf..(o + 1) * inf];
                let mut acc = self.b[o];
                for i in 0..inf {
                    acc += wrow[i] * xrow[i];
                }
                y[r * outf + o] = acc;
            }
        }
        y
    }

    pub fn backward(&self, x: &[f64], gy: &[f64], rows: usize, grads: &mut Linear) -> Vec<f64> {
        let (inf, outf) = (self.in_f, self.out_f);
        let mut gx = vec![0.0; rows * inf];
        for r in 0..rows {
            let xrow = &x[r * inf..(r + 1) * inf];
            let gxrow = &mut gx[r * inf..(r + 1) * inf];
            for o in 0..outf {
                let g = gy[r * outf + o];
                if g == 0.0 {
                    continue;
                }
                grads.b[o] += g;
                let wrow = &self.w[o * inf..(o + 1) * inf];
                let gwrow = &mut grads.w[o * inf..(o + 1) * inf];
                for i in 0..inf {
                    gwrow[i] += g * xrow[i];
                    gxrow[i] += g * wrow[i];
                }
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// Depthwise convolution over width, same padding.
// ---------------------------------------------------------------------------

/// `[B,ch,1,P] -> [B,ch,1,P]`, one `[1,k]` kernel per channel.
#[derive(Debug, Clone)]
pub struct DepthwiseConv {
    pub ch: usize,
    pub k: usize,
    pub w: Vec<f64>, // [ch][k]
    pub b: Vec<f64>, // [ch]
}

impl DepthwiseConv {
    pub fn new(ch: usize, k: usize) -> Self {
        DepthwiseConv { ch, k, w: vec![0.0; ch * k], b: vec![0.0; ch] }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &[f64], b: usize, p: usize) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let c = self.ch;
        let mut y = vec![0.0; x.len()];
        for bi in 0..b {
            for ch in 0..c {
                let wrow = &self.w[ch * self.k..(ch + 1) * self.k];
                let xrow = &x[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                let yrow = &mut y[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                for t in 0..p {
                    let mut acc = self.b[ch];
                    let lo = t.saturating_sub(pad);
                    let hi = (t + pad).min(p - 1);
                    for s in lo..=hi {
                        acc += xrow[s] * wrow[s + pad - t];
                    }
                    yrow[t] = acc;
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        gy: &[f64],
        b: usize,
        p: usize,
        grads: &mut DepthwiseConv,
    ) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let c = self.ch;
        let mut gx = vec![0.0; x.len()];
        for bi in 0..b {
            for ch in 0..c {
                let wrow = &self.w[ch * self.k..(ch + 1) * self.k];
                let gwrow = &mut grads.w[ch * self.k..(ch + 1) * self.k];
                let xrow = &x[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                let gyrow = &gy[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                let gxrow = &mut gx[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                for t in 0..p {
                    let g = gyrow[t];
                    if g == 0.0 {
                        continue;
                    }
                    grads.b[ch] += g;
                    let lo = t.saturating_sub(pad);
                    let hi = (t + pad).min(p - 1);
                    for s in lo..=hi {
                        gwrow[s + pad - t] += g * xrow[s];
                        gxrow[s] += g * wrow[s + pad - t];
                    }
                }
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// Pointwise (1x1) convolution and its transpose.
// ---------------------------------------------------------------------------

/// `[B,in,1,P] -> [B,out,1,P]` with a `[1,1]` kernel; weight `[out][in]`.
#[derive(Debug, Clone)]
pub struct PointwiseConv {
    pub in_ch: usize,
    pub out_ch: usize,
    pub w: Vec<f64>, // [out][in]
    pub b: Vec<f64>, // [out]
}

impl PointwiseConv {
    pub fn new(in_ch: usize, out_ch: usize) -> Self {
        PointwiseConv { in_ch, out_ch, w: vec![0.0; out_ch * in_ch], b: vec![0.0; out_ch] }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &[f64], b: usize, p: usize) -> Vec<f64> {
        let (ic, oc) = (self.in_ch, self.out_ch);
        let mut y = vec![0.0; b * oc * p];
        for bi in 0..b {
            for o in 0..oc {
                let yrow = &mut y[(bi * oc + o) * p..(bi * oc + o + 1) * p];
                yrow.iter_mut().for_each(|v| *v = self.b[o]);
                for i in 0..ic {
                    let wv = self.w[o * ic + i];
                    let xrow = &x[(bi * ic + i) * p..(bi * ic + i + 1) * p];
                    for t in 0..p {
                        yrow[t] += wv * xrow[t];
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        gy: &[f64],
        b: usize,
        p: usize,
        grads: &mut PointwiseConv,
    ) -> Vec<f64> {
        let (ic, oc) = (self.in_ch, self.out_ch);
        let mut gx = vec![0.0; b * ic * p];
        for bi in 0..b {
            for o in 0..oc {
                let gyrow = &gy[(bi * oc + o) * p..(bi * oc + o + 1) * p];
                grads.b[o] += gyrow.iter().sum::<f64>();
                for i in 0..ic {
                    let widx = o * ic + i;
                    let xrow = &x[(bi * ic + i) * p..(bi * ic + i + 1) * p];
                    let gxrow = &mut gx[(bi * ic + i) * p..(bi * ic + i + 1) * p];
                    let wv = self.w[widx];
                    let mut gw = 0.0;
                    for t in 0..p {
                        gw += gyrow[t] * xrow[t];
                        gxrow[t] += gyrow[t] * wv;
                    }
                    grads.w[widx] += gw;
                }
            }
        }
        gx
    }
}

/// Transposed `[1,1]` convolution; weight `[in][out]` (so the parameter
/// count is `in*out + out`, matching a ConvTranspose2d with bias).
#[derive(Debug, Clone)]
pub struct PointwiseConvT {
    pub in_ch: usize,
    pub out_ch: usize,
    pub w: Vec<f64>, // [in][out]
    pub b: Vec<f64>, // [out]
}

impl PointwiseConvT {
    pub fn new(in_ch: usize, out_ch: usize) -> Self {
        PointwiseConvT { in_ch, out_ch, w: vec![0.0; in_ch * out_ch], b: vec![0.0; out_ch] }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &[f64], b: usize, p: usize) -> Vec<f64> {
        let (ic, oc) = (self.in_ch, self.out_ch);
        let mut y = vec![0.0; b * oc * p];
        for bi in 0..b {
            for o in 0..oc {
                let yrow = &mut y[(bi * oc + o) * p..(bi * oc + o + 1) * p];
                yrow.iter_mut().for_each(|v| *v = self.b[o]);
                for i in 0..ic {
                    let wv = self.w[i * oc + o];
                    let xrow = &x[(bi * ic + i) * p..(bi * ic + i + 1) * p];
                    for t in 0..p {
                        yrow[t] += wv * xrow[t];
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        gy: &[f64],
        b: usize,
        p: usize,
        grads: &mut PointwiseConvT,
    ) -> Vec<f64> {
        let (ic, oc) = (self.in_ch, self.out_ch);
        let mut gx = vec![0.0; b * ic * p];
        for bi in 0..b {
            for o in 0..oc {
                let gyrow = &gy[(bi * oc + o) * p..(bi * oc + o + 1) * p];
                grads.b[o] += gyrow.iter().sum::<f64>();
                for i in 0..ic {
                    let widx = i * oc + o;
                    let xrow = &x[(bi * ic + i) * p..(bi * ic + i + 1) * p];
                    let gxrow = &mut gx[(bi * ic + i) * p..(bi * ic + i + 1) * p];
                    let wv = self.w[widx];
                    let mut gw = 0.0;
                    for t in 0..p {
                        gw += gyrow[t] * xrow[t];
                        gxrow[t] += gyrow[t] * wv;
                    }
                    grads.w[widx] += gw;
                }
            }
        }
        gx
    }
}

// ---------------------------------------------------------------------------
// Transposed spatial and temporal convolutions (decoder side).
// ---------------------------------------------------------------------------

/// `[B,in,1,P] -> [B,out,C,P]`, kernel `[C,1]`; weight `[in][out][C]`.
#[derive(Debug, Clone)]
pub struct ConvTSpatial {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub w: Vec<f64>, // [in][out][kh]
    pub b: Vec<f64>, // [out]
}

impl ConvTSpatial {
    pub fn new(in_ch: usize, out_ch: usize, kh: usize) -> Self {
        ConvTSpatial {
            in_ch,
            out_ch,
            kh,
            w: vec![0.0; in_ch * out_ch * kh],
            b: vec![0.0; out_ch],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &[f64], b: usize, p: usize) -> Vec<f64> {
        let (ic, oc, kh) = (self.in_ch, self.out_ch, self.kh);
        let mut y = vec![0.0; b * oc * kh * p];
        for bi in 0..b {
            for o in 0..oc {
                for h in 0..kh {
                    let yrow = &mut y[((bi * oc + o) * kh + h) * p..((bi * oc + o) * kh + h + 1) * p];
                    yrow.iter_mut().for_each(|v| *v = self.b[o]);
                    for i in 0..ic {
                        let wv = self.w[(i * oc + o) * kh + h];
                        let xrow = &x[(bi * ic + i) * p..(bi * ic + i + 1) * p];
                        for t in 0..p {
                            yrow[t] += wv * xrow[t];
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        gy: &[f64],
        b: usize,
        p: usize,
        grads: &mut ConvTSpatial,
    ) -> Vec<f64> {
        let (ic, oc, kh) = (self.in_ch, self.out_ch, self.kh);
        let mut gx = vec![0.0; b * ic * p];
        for bi in 0..b {
            for o in 0..oc {
                for h in 0..kh {
                    let gyrow = &gy[((bi * oc + o) * kh + h) * p..((bi * oc + o) * kh + h + 1) * p];
                    grads.b[o] += gyrow.iter().sum::<f64>();
                    for i in 0..ic {
                        let widx = (i * oc + o) * kh + h;
                        let wv = self.w[widx];
                        let xrow = &x[(bi * ic + i) * p..(bi * ic + i + 1) * p];
                        let gxrow = &mut gx[(bi * ic + i) * p..(bi * ic + i + 1) * p];
                        let mut gw = 0.0;
                        for t in 0..p {
                            gw += gyrow[t] * xrow[t];
                            gxrow[t] += gyrow[t] * wv;
                        }
                        grads.w[widx] += gw;
                    }
                }
            }
        }
        gx
    }
}

/// `[B,in,C,P] -> [B,1,C,P]`, kernel `[1,k]`, same padding; weight `[in][k]`,
/// single output bias.
#[derive(Debug, Clone)]
pub struct ConvTTemporal {
    pub in_ch: usize,
    pub k: usize,
    pub w: Vec<f64>, // [in][k]
    pub b: Vec<f64>, // [1]
}

impl ConvTTemporal {
    pub fn new(in_ch: usize, k: usize) -> Self {
        ConvTTemporal { in_ch, k, w: vec![0.0; in_ch * k], b: vec![0.0; 1] }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + 1
    }

    pub fn forward(&self, x: &[f64], b: usize, c: usize, p: usize) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let ic = self.in_ch;
        let mut y = vec![self.b[0]; b * c * p];
        for bi in 0..b {
            for i in 0..ic {
                let wrow = &self.w[i * self.k..(i + 1) * self.k];
                for ch in 0..c {
                    let xrow = &x[((bi * ic + i) * c + ch) * p..((bi * ic + i) * c + ch + 1) * p];
                    let yrow = &mut y[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                    // Transposed conv scatters x[t] onto y[t + k - pad].
                    for t in 0..p {
                        let xv = xrow[t];
                        if xv == 0.0 {
                            continue;
                        }
                        let lo = pad.saturating_sub(t);
                        let hi = (self.k - 1).min(p - 1 + pad - t);
                        for kk in lo..=hi {
                            yrow[t + kk - pad] += xv * wrow[kk];
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        gy: &[f64],
        b: usize,
        c: usize,
        p: usize,
        grads: &mut ConvTTemporal,
    ) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let ic = self.in_ch;
        let mut gx = vec![0.0; x.len()];
        grads.b[0] += gy.iter().sum::<f64>();
        for bi in 0..b {
            for i in 0..ic {
                let wrow = &self.w[i * self.k..(i + 1) * self.k];
                let gwrow = &mut grads.w[i * self.k..(i + 1) * self.k];
                for ch in 0..c {
                    let xrow = &x[((bi * ic + i) * c + ch) * p..((bi * ic + i) * c + ch + 1) * p];
                    let gyrow = &gy[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                    let gxrow =
                        &mut gx[((bi * ic + i) * c + ch) * p..((bi * ic + i) * c + ch + 1) * p];
                    for t in 0..p {
                        let lo = pad.saturating_sub(t);
                        let hi = (self.k - 1).min(p - 1 + pad - t);
                        let mut acc = 0.0;
                        for kk in lo..=hi {
                            let g = gyrow[t + kk - pad];
                            acc += g * wrow[kk];
                            gwrow[kk] += g * xrow[t];
                        }
                        gxrow[t] += acc;
                    }
                }
            }
        }
        gx
    }
}

/// Transposed depthwise convolution over width, same padding; weight `[ch][k]`.
#[derive(Debug, Clone)]
pub struct DepthwiseConvT {
    pub ch: usize,
    pub k: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl DepthwiseConvT {
    pub fn new(ch: usize, k: usize) -> Self {
        DepthwiseConvT { ch, k, w: vec![0.0; ch * k], b: vec![0.0; ch] }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &[f64], b: usize, p: usize) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let c = self.ch;
        let mut y = vec![0.0; x.len()];
        for bi in 0..b {
            for ch in 0..c {
                let wrow = &self.w[ch * self.k..(ch + 1) * self.k];
                let xrow = &x[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                let yrow = &mut y[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                yrow.iter_mut().for_each(|v| *v = self.b[ch]);
                for t in 0..p {
                    let xv = xrow[t];
                    if xv == 0.0 {
                        continue;
                    }
                    let lo = pad.saturating_sub(t);
                    let hi = (self.k - 1).min(p - 1 + pad - t);
                    for kk in lo..=hi {
                        yrow[t + kk - pad] += xv * wrow[kk];
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        x: &[f64],
        gy: &[f64],
        b: usize,
        p: usize,
        grads: &mut DepthwiseConvT,
    ) -> Vec<f64> {
        let pad = (self.k - 1) / 2;
        let c = self.ch;
        let mut gx = vec![0.0; x.len()];
        for bi in 0..b {
            for ch in 0..c {
                let wrow = &self.w[ch * self.k..(ch + 1) * self.k];
                let gwrow = &mut grads.w[ch * self.k..(ch + 1) * self.k];
                let xrow = &x[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                let gyrow = &gy[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                let gxrow = &mut gx[(bi * c + ch) * p..(bi * c + ch + 1) * p];
                grads.b[ch] += gyrow.iter().sum::<f64>();
                for t in 0..p {
                    let lo = pad.saturating_sub(t);
                    let hi = (self.k - 1).min(p - 1 + pad - t);
                    let mut acc = 0.0;
                    for kk in lo..=hi {
                        let g = gyrow[t + kk - pad];
                        acc += g * wrow[kk];
                        gwrow[kk] += g * xrow[t];
                    }
                    gxrow[t] += acc;
                }
            }
        }
        gx
    }
}
