//! Seed derivation for reproducible, non-overlapping random streams.
//!
//! Every random consumer gets its own ChaCha stream keyed by a 64-bit seed
//! derived from `(parent seed, label, index)` with a SplitMix64 finalizer, so
//! parallel workers never share a stream and results do not depend on
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derive a child seed from a parent seed, a purpose label and an index.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    let a = splitmix64(parent ^ label_hash(label));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn child_rng(parent: u64, label: &str, index: u64) -> SimRng {
    rng_from_seed(derive_seed(parent, label, index))
}
