//! Semi-supervised multi-concept adversarial EEG classification.
//!
//! The crate provides, end to end:
//!
//! - [`cohort`] — the subject/trial/sample data model, the on-disk cohort
//!   format, resampling and segmentation, balanced sampling, cross-subject
//!   folds and labeled/unlabeled/target domain splits;
//! - [`synthgen`] — synthetic EEG cohorts with planted class, gender,
//!   subject and domain effects so every protocol is runnable and checkable
//!   without clinical data;
//! - [`netcore`] — the CNN–BiGRU encoder-decoder generator with exact
//!   per-layer shapes and parameter counts, handwritten reverse-mode
//!   gradients and an RMSprop optimizer;
//! - [`adversarial`] — the four discriminator heads (signal, gender, domain,
//!   disease), their losses, and the alternating semi-supervised training
//!   loop;
//! - [`eval`] — cross-subject cross-validation, grouped confusion matrices,
//!   ablations, labeled-ratio and loss-weight sweeps, sampling-robustness
//!   repetitions, domain-invariance probes and per-channel importance maps;
//! - [`config`] / [`runner`] — the JSON run configuration and the command
//!   drivers used by the `nssinet` CLI.
//!
//! Everything is deterministic given a master seed; see [`rng`].

pub mod adversarial;
pub mod cohort;
pub mod config;
pub mod error;
pub mod eval;
pub mod netcore;
pub mod rng;
pub mod runner;
pub mod synthgen;

pub use error::{Error, Result};
