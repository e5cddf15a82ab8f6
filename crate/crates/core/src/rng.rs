//! Reproducible random streams.
//!
//! Every trajectory draws from its own ChaCha stream selected by `(seed, stream)`, so
//! results do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for trajectory `index` and lane `lane` (system 1, system 2, inputs, ...).
pub fn stream_id(index: u64, lane: u64) -> u64 {
    (index << 3) | (lane & 0x7)
}

/// Generator for one `(seed, stream)` pair.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
