//! Seed splitting for reproducible parallel sampling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent stream `index` derived from a base seed. Streams with the same
/// `(seed, index)` are identical regardless of thread scheduling.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}

/// Draws a fresh base seed from `rng` and returns `n` split streams.
pub fn split(rng: &mut impl RngCore, n: usize) -> Vec<ChaCha8Rng> {
    let seed = rng.next_u64();
    (0..n as u64).map(|i| stream(seed, i)).collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
