//! Backbone pretraining and per-domain adapter fine-tuning.

mod config;
mod dynamic_lr;
mod finetune;
mod mixing;
mod pretrain;

pub use config::TrainConfig;
pub use dynamic_lr::{dynamic_lr, DynamicLrState, GRAD_NORM_FLOOR};
pub use finetune::{
    backbone_batch, finetune_all, finetune_window, FinetuneCurvePoint, FinetuneReport, FinetuneSource, FinetuneTask,
};
pub use mixing::{mix_domains, shuffled_stream, EpochSampler};
pub use pretrain::{pretrain, CurvePoint, PretrainReport};

pub(crate) use crate::iak::domain_seed;
