//! Seed derivation and content digests.
//!
//! Every experiment derives its generators from a root seed plus a short tag,
//! so runs that share a root seed never share a random stream by accident.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministic generator used everywhere in the crate.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `derive(root, "trigger")` and `derive(root, "train")` are independent
/// streams; the same pair always maps to the same child seed.
pub fn derive(root: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(tag.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
