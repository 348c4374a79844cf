use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{DEFAULT_DECAY, DEFAULT_EPSILON};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Backbone pretraining batch size.
    pub batch_size: usize,
    /// Backbone pretraining epochs.
    pub epochs: usize,
    /// Backbone learning rate.
    pub base_lr: f64,
    /// Adapter learning rate λ before dynamic scaling.
    pub finetune_lr: f64,
    pub finetune_batch_size: usize,
    /// Passes over each adapter's primary records.
    pub finetune_epochs: usize,
    /// Days at the end of the training split used for fine-tuning.
    pub finetune_window_days: usize,
    /// Days at the end of the training split withheld from backbone
    /// pretraining, so that adapters fine-tune on data the backbone never saw.
    pub pretrain_holdout_days: usize,
    pub decay: f64,
    pub epsilon: f64,
    /// Fine-tune all adapters on shared batches with dynamic learning rates;
    /// otherwise adapters are trained one by one at the base rate.
    pub joint: bool,
    /// Optional mixing weights keyed by domain (`"scene=1"`); applies to the
    /// adapter of every domain listed. Weights include that domain and sum to 1.
    pub mixing: BTreeMap<String, f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1024,
            epochs: 1,
            base_lr: 0.005,
            finetune_lr: 0.005,
            finetune_batch_size: 1024,
            finetune_epochs: 1,
            finetune_window_days: 7,
            pretrain_holdout_days: 0,
            decay: DEFAULT_DECAY,
            epsilon: DEFAULT_EPSILON,
            joint: false,
            mixing: BTreeMap::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.finetune_batch_size == 0 {
            return Err(Error::InvalidArgument("batch sizes must be at least 1".into()));
        }
        if self.epochs == 0 || self.finetune_epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.finetune_window_days == 0 {
            return Err(Error::InvalidArgument("finetune_window_days must be at least 1".into()));
        }
        for (name, lr) in [("base_lr", self.base_lr), ("finetune_lr", self.finetune_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !self.mixing.is_empty() {
            let total: f64 = self.mixing.values().sum();
            if self.mixing.values().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("mixing weights must be non-negative and sum to 1, got {total}")));
            }
        }
        Ok(())
    }
}
