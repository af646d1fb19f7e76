//! Seed derivation for independent, reproducible random streams.
//!
//! Every stochastic routine takes a plain `u64` seed and expands it with
//! ChaCha20. Replications derive their seeds from the master seed and a list
//! of labels (truth, horizon, replication index, purpose), so streams never
//! depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Hashes `(master, labels...)` into a child seed.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"torus-bvm/seed");
    hasher.update(master.to_le_bytes());
    for label in labels {
        hasher.update(label.to_le_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn generator(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Stable numeric label for a short string tag.
pub fn label(tag: &str) -> u64 {
    let digest = Sha256::digest(tag.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = derive_seed(7, &[1, 2]);
        assert_eq!(a, derive_seed(7, &[1, 2]));
        assert_ne!(a, derive_seed(7, &[2, 1]));
        assert_ne!(a, derive_seed(8, &[1, 2]));
        let x: u64 = generator(a).random();
        let y: u64 = generator(a).random();
        assert_eq!(x, y);
    }
}
