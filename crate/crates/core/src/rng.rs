//! Deterministic RNG streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] whose key is
//! the SHA-256 of a master seed, a domain tag and a path of indices. Streams
//! for different `(node, candidate, column)` tuples are therefore independent
//! of generation order, which keeps parallel and sequential runs bit-identical.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a keyed RNG stream from `seed`, a domain label and an index path.
pub fn stream(seed: u64, domain: &str, path: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    for p in path {
        hasher.update(p.to_le_bytes());
    }
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(key)
}

/// Derives a child seed, for handing a sub-task its own master seed.
pub fn child_seed(seed: u64, domain: &str, path: &[u64]) -> u64 {
    use rand::RngCore;
    stream(seed, domain, path).next_u64()
}
