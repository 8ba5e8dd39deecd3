//! The multi-concept adversarial training stage: four discriminator heads
//! over the generator's reconstructions and latent features, trained in
//! alternation with the generator.
//!
//! Per step, the heads first descend their own classification losses (the
//! disease head on labeled-source samples only), then the generator
//! descends the non-saturating signal term plus the weighted reconstruction
//! and disease terms while ascending the gender (in `invariance` mode) and
//! domain losses via negated gradients.

pub mod heads;
pub mod losses;
mod trainer;

pub use heads::{DomainMode, HeadParams, Mlp};
pub use losses::{
    loss_disease, loss_domain, loss_gan, loss_gender, loss_reconstruction, loss_signal,
    total_loss, LossComponents, LossWeights, SignalLoss, PROB_CLAMP,
};
pub use trainer::{
    build_pools, features_eval, load_model, predict_disease, save_model, DomainPools,
    StepBatch, StepOutcome, Trainer,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which way the gender head couples to the generator: `invariance` makes
/// the generator confuse the gender classifier (negated gradients);
/// `cooperative` makes it help.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderMode {
    Invariance,
    Cooperative,
}

/// Which heads participate in training; ablations switch heads off. The
/// disease head is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadSwitches {
    pub signal: bool,
    pub gender: bool,
    pub domain: bool,
}

impl Default for HeadSwitches {
    fn default() -> Self {
        HeadSwitches { signal: true, gender: true, domain: true }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    /// L2 coefficient, applied as weight decay to weights only.
    pub l2: f64,
    pub epochs: usize,
    /// Mini-batch composition (labeled source, unlabeled source, target).
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub batch_target: usize,
    pub dropout: f64,
    pub gender_mode: GenderMode,
    /// Transductive training: target-fold samples join the unsupervised
    /// terms. Disable to exclude the target domain from training.
    pub include_target: bool,
    pub head_hidden: usize,
    /// Abort when the total loss exceeds this multiple of its initial value.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            rmsprop_decay: 0.9,
            rmsprop_eps: 1e-8,
            l2: 1e-5,
            epochs: 80,
            batch_labeled: 16,
            batch_unlabeled: 16,
            batch_target: 16,
            dropout: 0.25,
            gender_mode: GenderMode::Invariance,
            include_target: true,
            head_hidden: 64,
            divergence_factor: 1e3,
        }
    }
}

impl TrainConfig {
    pub fn batch(&self) -> usize {
        self.batch_labeled + self.batch_unlabeled + self.batch_target
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_labeled == 0 {
            return Err(Error::Config("batch must include labeled-source samples".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return Err(Error::Config("rmsprop decay must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if self.divergence_factor <= 1.0 {
            return Err(Error::Config("divergence factor must exceed 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean loss components; `total` is the weighted combination of
/// the logged components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub signal: f64,
    pub gender: f64,
    pub domain: f64,
    pub disease: f64,
    pub total: f64,
}

impl LossRecord {
    pub fn csv_header() -> &'static str {
        "epoch,loss_signal,loss_gender,loss_domain,loss_disease,total"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9}",
            self.epoch, self.signal, self.gender, self.domain, self.disease, self.total
        )
    }
}
