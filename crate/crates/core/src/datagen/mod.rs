//! Synthetic multi-domain interaction logs and their JSONL storage.

mod generator;
mod io;
mod record;
mod split;

pub use generator::{
    generate, DomainLayout, DomainSpec, GeneratorConfig, AGE_BUCKETS, EPOCH_START, N_CONTEXT_FEATURES,
};
pub use io::{parse_jsonl, read_jsonl, write_jsonl};
pub use record::{DomainIds, DomainKey, InteractionRecord, Topic, SECONDS_PER_DAY};
pub use split::{before_last_days, last_days, split_chronological};
