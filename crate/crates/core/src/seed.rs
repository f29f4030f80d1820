//! Labeled seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! master seed and a purpose string, so components stay reproducible in
//! isolation and never depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives a child seed from `master` and a purpose label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `rng_from_seed(derive_seed(master, label))`.
pub fn labeled_rng(master: u64, label: &str) -> Rng {
    rng_from_seed(derive_seed(master, label))
}
