//! Reverse-mode differentiation over dense tensors, plus the optimizer.

mod graph;
mod optim;
mod param;

pub use graph::{Graph, NodeId, PROB_EPS};
pub(crate) use graph::{sigmoid, softplus};
pub use optim::{AdagradDecay, DEFAULT_DECAY, DEFAULT_EPSILON};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
