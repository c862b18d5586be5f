//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha stream whose seed is derived
//! from the run seed and a label, so results do not depend on iteration or
//! thread schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives a stream seed from the run seed and an ordered list of labels.
pub fn derive_seed(seed: u64, labels: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for label in labels {
        h.update((label.len() as u64).to_le_bytes());
        h.update(label);
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(seed: u64, labels: &[&[u8]]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, labels))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
