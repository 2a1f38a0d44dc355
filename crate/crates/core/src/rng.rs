//! Seeded random streams.
//!
//! Every stage draws from its own ChaCha8 stream whose seed is
//! `first 8 bytes (little endian) of SHA-256(seed.to_le_bytes() ++ stage)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(stage.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(seed: u64, stage: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stage))
}

/// Short hex digest used to tag output files with the configuration they came from.
pub fn config_hash(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
