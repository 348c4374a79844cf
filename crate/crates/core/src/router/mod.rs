//! Domain-activated inference over a frozen backbone and its adapters, and a
//! JSON-lines scoring service.

mod route;
mod serve;

pub use route::{DomainRouter, RouterConfig, ScoreRequest, ScoreResponse, ZERO_SHOT};
pub use serve::{serve, serve_unix, ServeStats};
