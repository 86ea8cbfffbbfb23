//! Seed derivation. Every Monte Carlo draw in the crate comes from a stream
//! keyed by `(master seed, experiment tag, indices...)`, so results do not
//! depend on evaluation order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags, one per consumer of derived seeds.
pub mod tag {
    pub const CONE_PHASE: u64 = 0xC0;
    pub const ELLIPSOID_PHASE: u64 = 0xE1;
    pub const WIDTH_MC: u64 = 0x3C;
    pub const MAP_NORM: u64 = 0x4A;
    pub const BALL_SAMPLES: u64 = 0xBA;
    pub const SPLIT: u64 = 0x5B;
    pub const SHAPES: u64 = 0x5A;
    pub const PROJECTION: u64 = 0x9F;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hash a master seed together with any number of indices into a new seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(master: u64, parts: &[u64]) -> StreamRng {
    stream(derive_seed(master, parts))
}

/// Fresh nondeterministic seed, for callers that did not supply one.
pub fn fresh_seed() -> u64 {
    rand::random()
}
