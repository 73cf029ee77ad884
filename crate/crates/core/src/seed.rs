//! Id-based seed derivation.
//!
//! Every random stream is keyed by `(master_seed, path...)` so results do not
//! depend on scheduling order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream tags mixed into derived seeds.
pub mod stream {
    pub const DESIGN: u64 = 0x6465_7369;
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const GIBBS: u64 = 0x6769_6262;
    pub const ANNEAL: u64 = 0x616e_6e65;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a path of identifiers.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// Generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from(master: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
