//! Seed splitting.
//!
//! Every randomized component draws from its own stream derived from the
//! single global seed, so adding or reordering components never perturbs the
//! streams of the others. The derivation is `SHA-256(seed_le || label)`
//! truncated to the first eight bytes (little-endian), which is stable across
//! platforms and releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed for the component named `label`.
pub fn derive(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// RNG seeded for the component named `label`.
pub fn rng_for(seed: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(seed, label))
}
