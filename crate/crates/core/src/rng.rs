//! Deterministic per-event random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for `(seed, index, purpose)`; purposes are small
/// constants so that scene sampling and sensor noise never share draws.
pub fn stream_rng(seed: u64, index: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_mul(16).wrapping_add(purpose));
    rng
}
