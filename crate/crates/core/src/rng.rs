use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for `(seed, stream)`; distinct streams never overlap.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream identifiers used across the crate.
pub(crate) const STREAM_LATENTS: u64 = 1;
pub(crate) const STREAM_RECORDS: u64 = 2;
pub(crate) const STREAM_CALIBRATION: u64 = 3;
pub(crate) const STREAM_MODEL_INIT: u64 = 10;
pub(crate) const STREAM_SHUFFLE: u64 = 11;
pub(crate) const STREAM_ADAPTER_INIT: u64 = 20;
pub(crate) const STREAM_ADAPTER_NOISE: u64 = 21;
pub(crate) const STREAM_MIXING: u64 = 22;
