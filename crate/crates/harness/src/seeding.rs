//! Per-cell seed derivation.
//!
//! Every stochastic choice in a cell flows from one `ChaCha8Rng` seeded with
//! [`cell_seed`]. Auxiliary streams (probes, evaluation) are selected with
//! `set_stream` on generators seeded the same way.

use sha2::{Digest, Sha256};

/// Recorded in every manifest.
pub const GENERATOR_ID: &str = "rand_chacha-0.3/ChaCha8Rng; cell seed = first 8 bytes (LE) of SHA-256(seed as u64 LE || cell id UTF-8)";

pub fn cell_seed(seed: u64, cell_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(cell_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}
