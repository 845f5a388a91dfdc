//! Seed derivation.
//!
//! Every random stream in the crate is keyed by `(master seed, tag, index)`, so
//! a round's randomness never depends on which rounds ran before it or on
//! which thread ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Mixes a master seed, a string tag and an index into a child seed.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ fnv1a(tag));
    splitmix64(b ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// A ChaCha stream for `(master, tag, index)`.
pub fn stream(master: u64, tag: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}
