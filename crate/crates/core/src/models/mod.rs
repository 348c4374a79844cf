//! Multi-task recommendation backbones over a shared embedding layer.

mod embedding;
mod layers;
mod multitask;

pub use embedding::{EmbeddingTable, EncodedBatch, FeatureEmbedder, FeatureVocab};
pub use layers::{Dense, Mlp, LEAKY_SLOPE};
pub use multitask::{
    bce_loss, multitask_bce, BackboneOutputs, Composition, HeadOutput, Labels, ModelConfig, ModelKind,
    MultiTaskModel, Prediction, TASK_NAMES,
};
