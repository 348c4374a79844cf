//! Ranking metrics, information diagnostics and the experiment harness.

mod experiment;
mod info;
mod metrics;

pub use experiment::{
    run_experiment, EvalConfig, ExperimentKind, ExperimentOutput, ExperimentRow, SeedContext, Workbench,
};
pub use info::{
    bin_of, binned_mi, first_principal_projection, kl_empirical, quantile_edges, representation_mi, Histogram2D,
    DEFAULT_BINS, KL_SMOOTHING,
};
pub use metrics::{auc, evaluate, EvalReport};
