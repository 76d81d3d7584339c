//! Seed derivation.
//!
//! Every stochastic stage (splitting, shuffling, latent sampling, dropout
//! masks, per-cell ablation seeds) draws from its own ChaCha stream whose
//! seed is a stable hash of a base seed and a list of labels. Streams are
//! therefore independent of execution order and of libtorch's global RNG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stable 64-bit seed derived from `base` and an ordered list of labels.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(base: u64, labels: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, labels))
}
