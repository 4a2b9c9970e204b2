//! Deterministic seed derivation.
//!
//! Every stochastic choice in the pipeline (noise draws, identifier
//! resampling, shuffles, splits, weight init) derives its seed from a run
//! seed plus a context label through SHA-256, so runs are reproducible and
//! batch items can be processed concurrently without sharing RNG state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from a base seed and a list of context parts.
pub fn derive_seed(base: u64, parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Shorthand for deriving from integer context parts.
pub fn derive_seed_ints(base: u64, parts: &[u64]) -> u64 {
    let bytes: Vec<[u8; 8]> = parts.iter().map(|p| p.to_le_bytes()).collect();
    let refs: Vec<&[u8]> = bytes.iter().map(|b| b.as_slice()).collect();
    derive_seed(base, &refs)
}

/// Seeded generator used throughout the crate.
pub fn rng_from(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable_and_context_sensitive() {
        let a = derive_seed_ints(7, &[1, 2]);
        let b = derive_seed_ints(7, &[1, 2]);
        let c = derive_seed_ints(7, &[2, 1]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(7, &[b"noise"]), derive_seed(7, &[b"ids"]));
    }

    #[test]
    fn part_boundaries_matter() {
        // ("ab","c") must not collide with ("a","bc").
        assert_ne!(
            derive_seed(0, &[b"ab", b"c"]),
            derive_seed(0, &[b"a", b"bc"])
        );
    }
}
