//! Information-bottleneck adapter fine-tuning for multi-task (CTR / CTCVR)
//! recommenders.
//!
//! A multi-task backbone is pretrained on traffic from every domain and then
//! frozen. Each downstream domain gets a small encoder-decoder adapter whose
//! encoder weights carry a Gaussian posterior; the adapter adds per-task logit
//! corrections to the backbone and is trained with cross-entropy plus a KL
//! penalty pulling the encoder posterior toward a standard normal prior.

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod datagen;
pub mod eval;
pub mod iak;
pub mod models;
pub mod recipe;
mod error;
pub mod report;
pub mod rng;
pub mod router;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
