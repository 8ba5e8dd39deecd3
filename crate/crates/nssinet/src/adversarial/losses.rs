//! The four discriminator losses and their weighted combination.
//!
//! Sign and scale conventions: the GAN and reconstruction terms are batch
//! means; the gender, domain and disease losses are batch sums, exactly as
//! written. Probabilities are clamped to `[1e-7, 1 - 1e-7]` before any log,
//! and the logit-space gradients are the exact gradients of the clamped
//! expressions (zero where the clamp is active).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp for every log argument.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn in_range(p: f64) -> bool {
    p > PROB_CLAMP && p < 1.0 - PROB_CLAMP
}

/// Weights of the combined objective; `lambda` balances the reconstruction
/// term inside the signal loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub theta: f64,
    pub lambda: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, beta: 1.0, delta: 1.0, theta: 1.0, lambda: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("theta", self.theta),
            ("lambda", self.lambda),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("loss weight {name}={v} must be finite and nonnegative")));
            }
        }
        Ok(())
    }
}

/// Unweighted values of the four loss terms for one batch or epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub signal: f64,
    pub gender: f64,
    pub domain: f64,
    pub disease: f64,
}

/// GAN value `mean log D(X) + mean log(1 - D(G(X)))`. The discriminator
/// ascends this; the generator's non-saturating surrogate is elsewhere.
pub fn loss_gan(d_real: &[f64], d_fake: &[f64]) -> f64 {
    let real: f64 = d_real.iter().map(|&p| clamp(p).ln()).sum::<f64>() / d_real.len().max(1) as f64;
    let fake: f64 =
        d_fake.iter().map(|&p| (1.0 - clamp(p)).ln()).sum::<f64>() / d_fake.len().max(1) as f64;
    real + fake
}

/// Squared reconstruction error, summed per sample, averaged over the batch.
pub fn loss_reconstruction(x: &[f64], xhat: &[f64], batch: usize) -> Result<f64> {
    if x.len() != xhat.len() || batch == 0 || x.len() % batch != 0 {
        return Err(Error::Shape(format!(
            "reconstruction loss: {} vs {} elements over batch {batch}",
            x.len(),
            xhat.len()
        )));
    }
    let sse: f64 = x.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / batch as f64)
}

/// Both sides of the signal-specific min-max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalLoss {
    /// `-mean log D(G(X)) + lambda * reconstruction` (generator descends).
    pub generator_term: f64,
    /// `-(mean log D(X) + mean log(1 - D(G(X))))` (discriminator descends).
    pub discriminator_term: f64,
}

pub fn loss_signal(
    x: &[f64],
    xhat: &[f64],
    d_real: &[f64],
    d_fake: &[f64],
    lambda: f64,
    batch: usize,
) -> Result<SignalLoss> {
    let rec = loss_reconstruction(x, xhat, batch)?;
    let adv: f64 =
        -d_fake.iter().map(|&p| clamp(p).ln()).sum::<f64>() / d_fake.len().max(1) as f64;
    Ok(SignalLoss {
        generator_term: adv + lambda * rec,
        discriminator_term: -loss_gan(d_real, d_fake),
    })
}

/// `-sum log e(O_male) - sum log(1 - e(O_female))`. Empty groups contribute
/// zero (degenerate batch).
pub fn loss_gender(e_male: &[f64], e_female: &[f64]) -> f64 {
    let m: f64 = e_male.iter().map(|&p| -clamp(p).ln()).sum();
    let f: f64 = e_female.iter().map(|&p| -(1.0 - clamp(p)).ln()).sum();
    m + f
}

/// Categorical cross-entropy `-sum_i p(X_i) . log d(O_i)`, summed over the
/// batch. `probs` and `one_hot` are row-major `[n][classes]`.
pub fn loss_domain(probs: &[f64], one_hot: &[f64], classes: usize) -> Result<f64> {
    if classes == 0 || probs.len() != one_hot.len() || probs.len() % classes != 0 {
        return Err(Error::Shape("domain loss: mismatched probability/label shapes".into()));
    }
    let n = probs.len() / classes;
    let mut total = 0.0;
    for i in 0..n {
        let row = &one_hot[i * classes..(i + 1) * classes];
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Contract(format!("malformed one-hot domain label at row {i}")));
        }
        for c in 0..classes {
            if row[c] == 1.0 {
                total -= clamp(probs[i * classes + c]).ln();
            }
        }
    }
    Ok(total)
}

/// Binary cross-entropy over labeled-source samples only, summed.
/// `probs` are the logistic outputs, `y` the 0/1 disease labels.
pub fn loss_disease(probs: &[f64], y: &[f64]) -> Result<f64> {
    if probs.len() != y.len() {
        return Err(Error::Shape("disease loss: probs and labels differ in length".into()));
    }
    let mut total = 0.0;
    for (&p, &yi) in probs.iter().zip(y) {
        if yi != 0.0 && yi != 1.0 {
            return Err(Error::Contract(format!("disease label {yi} is not binary")));
        }
        let p = clamp(p);
        total -= yi * p.ln() + (1.0 - yi) * (1.0 - p).ln();
    }
    Ok(total)
}

/// `alpha*L_signal + beta*L_gender + delta*L_disc + theta*L_disease`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.alpha * c.signal + w.beta * c.gender + w.delta * c.domain + w.theta * c.disease
}

// --- logit-space gradients, exact w.r.t. the clamped expressions ----------

/// d/dz of `-log sigmoid(z)` (target 1) or `-log(1 - sigmoid(z))` (target 0):
/// `sigmoid(z) - target`, gated to zero where the clamp saturates the log.
pub fn bce_grad_logit(p: f64, target: f64) -> f64 {
    if in_range(p) {
        p - target
    } else {
        0.0
    }
}

/// Per-row softmax-CE logit gradient `p - onehot`, gated by the clamp on
/// the true class probability. Returns a `[n][classes]` gradient.
pub fn softmax_ce_grad_logits(probs: &[f64], one_hot: &[f64], classes: usize) -> Vec<f64> {
    let n = probs.len() / classes;
    let mut g = vec![0.0; probs.len()];
    for i in 0..n {
        let mut p_true = 0.0;
        for c in 0..classes {
            if one_hot[i * classes + c] == 1.0 {
                p_true = probs[i * classes + c];
            }
        }
        if in_range(p_true) {
            for c in 0..classes {
                g[i * classes + c] = probs[i * classes + c] - one_hot[i * classes + c];
            }
        }
    }
    g
}

/// Row-wise softmax over `[n][classes]` logits.
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let n = logits.len() / classes;
    let mut p = vec![0.0; logits.len()];
    for i in 0..n {
        let row = &logits[i * classes..(i + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for c in 0..classes {
            let e = (row[c] - max).exp();
            p[i * classes + c] = e;
            denom += e;
        }
        for c in 0..classes {
            p[i * classes + c] /= denom;
        }
    }
    p
}
