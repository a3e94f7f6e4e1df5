//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 stream keyed by a
//! master seed and selected by a stream index, so results depend only on
//! `(seed, index)` and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Identifier recorded in dataset manifests.
pub const ALGORITHM_ID: &str = "chacha20/rand_chacha-0.9/seed_from_u64+stream";

pub type StreamRng = ChaCha20Rng;

/// Independent stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed from `(seed, index)` with a SplitMix64 finalizer.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
