//! Named random streams derived from a single seed.
//!
//! Every consumer of randomness (view shuffling, split sampling, density-guided
//! clone offsets, scene generation) draws from its own ChaCha stream, so
//! enabling one feature never shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const VIEWS: &str = "views";
pub const SPLIT: &str = "split";
pub const DGC: &str = "dgc";
pub const SCENE: &str = "scene";

fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic substream `name` of `seed`.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name));
    rng
}
