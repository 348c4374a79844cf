//! Per-domain information-bottleneck adapters over a frozen backbone.

mod adapter;
mod variational;

pub(crate) use adapter::domain_seed;
pub use adapter::{
    adapters_from_checkpoint, adapters_to_checkpoint,ib_loss, FinetuneBatch, IakAdapter, IakConfig, LossNodes, StepStats};
pub use variational::{gaussian_kl, rho_for_sigma, LayerNoise, SampleMode, VariationalLinear, SIGMA_INIT};
