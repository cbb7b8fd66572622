//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha8 stream, selected by name, so
//! adding a consumer never shifts the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Stream used by `Prior::sample_empirical`.
pub const SAMPLING: &str = "sampling";
/// Stream used by the environment generators.
pub const ENVIRONMENT: &str = "environment";
/// Stream used for random reference policies in diagnostics.
pub const POLICIES: &str = "policies";
/// Stream used by the episode simulator.
pub const SIMULATION: &str = "simulation";

fn hash64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    u64::from_le_bytes(b)
}

/// Named substream of `seed`.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(hash64(&[name.as_bytes()]));
    rng
}

/// Seed for one experiment cell, a pure function of the root seed and the cell key.
pub fn derive_seed(root: u64, key: &str) -> u64 {
    hash64(&[&root.to_le_bytes(), key.as_bytes()])
}
