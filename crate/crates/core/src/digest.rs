//! SHA-256 helpers shared by traces, fixtures and seeds.

use alloc::string::String;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Per-shot seed: a stable hash of the job's global seed and the shot id.
///
/// Shots never share RNG state, so rendering order cannot affect output.
pub fn shot_seed(global_seed: u64, shot_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update(b"/");
    hasher.update(shot_id.as_bytes());
    let out = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&out[..8]);
    u64::from_le_bytes(word)
}
