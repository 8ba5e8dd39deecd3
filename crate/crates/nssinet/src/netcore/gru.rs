//! Bidirectional GRU with handwritten backpropagation through time.
//!
//! Gate formulation (two bias vectors, gate order r, z, n):
//!
//! ```text
//! r_t = sigmoid(W_ir x_t + b_ir + W_hr h_{t-1} + b_hr)
//! z_t = sigmoid(W_iz x_t + b_iz + W_hz h_{t-1} + b_hz)
//! n_t = tanh(W_in x_t + b_in + r_t * (W_hn h_{t-1} + b_hn))
//! h_t = (1 - z_t) * n_t + z_t * h_{t-1}
//! ```
//!
//! The initial hidden state is zero. The bidirectional layer runs one cell
//! forward and one over the reversed sequence, re-reverses the latter and
//! concatenates `[forward | backward]` along the feature axis.

use rand_chacha::ChaCha8Rng;

use super::layers::init_uniform;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One direction's parameters.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub in_f: usize,
    pub hidden: usize,
    pub w_ih: Vec<f64>, // [3H][in] gate-major (r, z, n)
    pub w_hh: Vec<f64>, // [3H][H]
    pub b_ih: Vec<f64>, // [3H]
    pub b_hh: Vec<f64>, // [3H]
}

impl GruCell {
    pub fn new(in_f: usize, hidden: usize) -> Self {
        GruCell {
            in_f,
            hidden,
            w_ih: vec![0.0; 3 * hidden * in_f],
            w_hh: vec![0.0; 3 * hidden * hidden],
            b_ih: vec![0.0; 3 * hidden],
            b_hh: vec![0.0; 3 * hidden],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_ih.len() + self.w_hh.len() + self.b_ih.len() + self.b_hh.len()
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        init_uniform(rng, &mut self.w_ih, self.in_f);
        init_uniform(rng, &mut self.w_hh, self.hidden);
        // biases stay zero
    }
}

/// Per-timestep values cached for backprop, one direction.
#[derive(Debug, Clone, Default)]
pub struct GruCache {
    /// `[steps][B][H]` each: gates and pre-activations.
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `W_hn h_{t-1} + b_hn`, needed for the reset-gate adjoint.
    pub hh_n: Vec<f64>,
    /// Hidden states including the initial zero state: `[steps+1][B][H]`.
    pub h: Vec<f64>,
}

impl GruCell {
    /// Run the cell over `steps` timesteps of a `[B, steps, in_f]` sequence,
    /// visiting timesteps in the order given by `time_index` (identity for
    /// the forward direction, reversed for the backward direction).
    /// Returns hidden states `[B, steps, H]` in visit order plus the cache.
    fn run(
        &self,
        x: &[f64],
        b: usize,
        steps: usize,
        time_index: &dyn Fn(usize) -> usize,
    ) -> (Vec<f64>, GruCache) {
        let (h, inf) = (self.hidden, self.in_f);
        let mut cache = GruCache {
            r: vec![0.0; steps * b * h],
            z: vec![0.0; steps * b * h],
            n: vec![0.0; steps * b * h],
            hh_n: vec![0.0; steps * b * h],
            h: vec![0.0; (steps + 1) * b * h],
        };
        let mut out = vec![0.0; b * steps * h];
        for s in 0..steps {
            let t = time_index(s);
            for bi in 0..b {
                let xrow = &x[(bi * steps + t) * inf..(bi * steps + t + 1) * inf];
                let hprev_off = s * b * h + bi * h;
                let hnext_off = (s + 1) * b * h + bi * h;
                for u in 0..h {
                    let mut acc = [0.0f64; 3]; // ih projections for r,z,n
                    let mut hacc = [0.0f64; 3]; // hh projections
                    for (gate, a) in acc.iter_mut().enumerate() {
                        let row = (gate * h + u) * inf;
                        let wrow = &self.w_ih[row..row + inf];
                        let mut v = self.b_ih[gate * h + u];
                        for i in 0..inf {
                            v += wrow[i] * xrow[i];
                        }
                        *a = v;
                    }
                    for (gate, a) in hacc.iter_mut().enumerate() {
                        let row = (gate * h + u) * h;
                        let wrow = &self.w_hh[row..row + h];
                        let mut v = self.b_hh[gate * h + u];
                        for i in 0..h {
                            v += wrow[i] * cache.h[hprev_off + i];
                        }
                        *a = v;
                    }
                    let r = sigmoid(acc[0] + hacc[0]);
                    let z = sigmoid(acc[1] + hacc[1]);
                    let n = (acc[2] + r * hacc[2]).tanh();
                    let hv = (1.0 - z) * n + z * cache.h[hprev_off + u];
                    let coff = s * b * h + bi * h + u;
                    cache.r[coff] = r;
                    cache.z[coff] = z;
                    cache.n[coff] = n;
                    cache.hh_n[coff] = hacc[2];
                    cache.h[hnext_off + u] = hv;
                    out[(bi * steps + s) * h + u] = hv;
                }
            }
        }
        (out, cache)
    }

    /// Backprop through [`run`]. `gy` is `[B, steps, H]` in visit order and
    /// the returned input gradient is `[B, steps, in_f]` in original time
    /// order (accumulated into `gx`).
    #[allow(clippy::too_many_arguments)]
    fn run_backward(
        &self,
        x: &[f64],
        cache: &GruCache,
        gy: &[f64],
        b: usize,
        steps: usize,
        time_index: &dyn Fn(usize) -> usize,
        grads: &mut GruCell,
        gx: &mut [f64],
    ) {
        let (h, inf) = (self.hidden, self.in_f);
        let mut dh_carry = vec![0.0; b * h];
        for s in (0..steps).rev() {
            let t = time_index(s);
            for bi in 0..b {
                let xrow = &x[(bi * steps + t) * inf..(bi * steps + t + 1) * inf];
                let hprev_off = s * b * h + bi * h;
                let mut dh_prev = vec![0.0; h];
                for u in 0..h {
                    let coff = s * b * h + bi * h + u;
                    let dh = gy[(bi * steps + s) * h + u] + dh_carry[bi * h + u];
                    if dh == 0.0 {
                        continue;
                    }
                    let (r, z, n, hh_n) =
                        (cache.r[coff], cache.z[coff], cache.n[coff], cache.hh_n[coff]);
                    let hprev_u = cache.h[hprev_off + u];
                    let dz = dh * (hprev_u - n);
                    let dn = dh * (1.0 - z);
                    dh_prev[u] += dh * z;
                    let da_n = dn * (1.0 - n * n);
                    let dr = da_n * hh_n;
                    let dhh_n = da_n * r;
                    let da_z = dz * z * (1.0 - z);
                    let da_r = dr * r * (1.0 - r);
                    for (gate, da, dhh) in [
                        (0usize, da_r, da_r),
                        (1, da_z, da_z),
                        (2, da_n, dhh_n),
                    ] {
                        let gu = gate * h + u;
                        grads.b_ih[gu] += da;
                        grads.b_hh[gu] += dhh;
                        let wih_row = gu * inf;
                        for i in 0..inf {
                            grads.w_ih[wih_row + i] += da * xrow[i];
                        }
                        let whh_row = gu * h;
                        for i in 0..h {
                            grads.w_hh[whh_row + i] += dhh * cache.h[hprev_off + i];
                            dh_prev[i] += dhh * self.w_hh[whh_row + i];
                        }
                        let gxrow = &mut gx[(bi * steps + t) * inf..(bi * steps + t + 1) * inf];
                        for i in 0..inf {
                            gxrow[i] += da * self.w_ih[wih_row + i];
                        }
                    }
                }
                dh_carry[bi * h..(bi + 1) * h].copy_from_slice(&dh_prev);
            }
        }
    }
}

/// Bidirectional GRU over `[B, M, in_f]` sequences, output `[B, M, 2H]`.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

/// Caches for both directions of one forward pass.
#[derive(Debug, Clone)]
pub struct BiGruCache {
    pub fwd: GruCache,
    pub bwd: GruCache,
}

impl BiGru {
    pub fn new(in_f: usize, hidden: usize) -> Self {
        BiGru { fwd: GruCell::new(in_f, hidden), bwd: GruCell::new(in_f, hidden) }
    }

    pub fn param_count(&self) -> usize {
        self.fwd.param_count() + self.bwd.param_count()
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        self.fwd.init(rng);
        self.bwd.init(rng);
    }

    /// Output columns `[0..H]` hold the forward pass; `[H..2H]` the backward
    /// pass over the reversed sequence, re-reversed to align time.
    pub fn forward(&self, x: &[f64], b: usize, steps: usize) -> (Vec<f64>, BiGruCache) {
        let h = self.fwd.hidden;
        let ident = |s: usize| s;
        let rev = move |s: usize| steps - 1 - s;
        let (out_f, cache_f) = self.fwd.run(x, b, steps, &ident);
        let (out_b, cache_b) = self.bwd.run(x, b, steps, &rev);
        let mut y = vec![0.0; b * steps * 2 * h];
        for bi in 0..b {
            for t in 0..steps {
                let yoff = (bi * steps + t) * 2 * h;
                let foff = (bi * steps + t) * h;
                // backward direction visited step s = steps-1-t at time t
                let boff = (bi * steps + (steps - 1 - t)) * h;
                y[yoff..yoff + h].copy_from_slice(&out_f[foff..foff + h]);
                y[yoff + h..yoff + 2 * h].copy_from_slice(&out_b[boff..boff + h]);
            }
        }
        (y, BiGruCache { fwd: cache_f, bwd: cache_b })
    }

    pub fn backward(
        &self,
        x: &[f64],
        cache: &BiGruCache,
        gy: &[f64],
        b: usize,
        steps: usize,
        grads: &mut BiGru,
    ) -> Vec<f64> {
        let h = self.fwd.hidden;
        let mut gy_f = vec![0.0; b * steps * h];
        let mut gy_b = vec![0.0; b * steps * h];
        for bi in 0..b {
            for t in 0..steps {
                let yoff = (bi * steps + t) * 2 * h;
                let foff = (bi * steps + t) * h;
                let boff = (bi * steps + (steps - 1 - t)) * h;
                gy_f[foff..foff + h].copy_from_slice(&gy[yoff..yoff + h]);
                gy_b[boff..boff + h].copy_from_slice(&gy[yoff + h..yoff + 2 * h]);
            }
        }
        let mut gx = vec![0.0; x.len()];
        let ident = |s: usize| s;
        let rev = move |s: usize| steps - 1 - s;
        self.fwd.run_backward(x, &cache.fwd, &gy_f, b, steps, &ident, &mut grads.fwd, &mut gx);
        self.bwd.run_backward(x, &cache.bwd, &gy_b, b, steps, &rev, &mut grads.bwd, &mut gx);
        gx
    }
}
