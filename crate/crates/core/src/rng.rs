//! Seed-splitting for reproducible simulations.
//!
//! One master seed drives a whole experiment; every module/consumer derives an
//! independent substream as `substream(master, label, index)`. The derivation
//! is SHA-256 of `(master_le_bytes || label || index_le_bytes)`, taken as a
//! ChaCha8 key, so any single result row can be reproduced in isolation
//! without replaying the rest of the run, and results do not depend on
//! scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a named, indexed RNG substream from a master seed.
pub fn substream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derive a 64-bit sub-seed (for handing a whole seed to a nested consumer).
pub fn subseed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
