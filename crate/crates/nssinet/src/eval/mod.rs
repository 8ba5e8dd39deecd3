//! Experiment drivers: cross-subject cross-validation, grouped confusion
//! matrices, ablations, labeled-ratio and loss-weight sweeps, sampling
//! robustness, domain-invariance probes and channel-importance maps.

mod channels;
mod confusion;
mod cv;
mod oracle;
mod probe;
pub mod report;
mod sweeps;
pub mod topo;

pub use channels::{channel_importance, ChannelImportanceMap};
pub use confusion::{confusion, ConfusionMatrix, Group};
pub use cv::{run_cv, run_cv_with_plan, CvOptions, CVReport, FoldResult};
pub use oracle::{band_power_features, oracle_cv_accuracy, LogisticModel};
pub use probe::{domain_invariance_probe, domain_probe, InvarianceReport, ProbeOutcome};
pub use sweeps::{
    ablate, paper_weight_tuples, ratio_sweep, sampling_robustness, weight_sweep, AblationVariant,
    SweepRow, SweepTable,
};
