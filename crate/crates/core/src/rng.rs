//! Deterministic random substreams.
//!
//! Every consumer of randomness asks for a stream keyed by the master seed, a
//! purpose tag and a list of indices (drop, trial, ...). The key is hashed
//! with SHA-256 into a ChaCha20 seed, so streams are independent of each
//! other and of the order in which they are requested.

use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

/// Well-known purpose tags. Adding a tag never perturbs existing streams.
pub mod purpose {
    pub const UE_PLACEMENT: &str = "ue-placement";
    pub const AP_PLACEMENT: &str = "ap-placement";
    pub const LARGE_SCALE: &str = "large-scale";
    pub const COMM_MOMENTS: &str = "comm-moments";
    pub const THRESHOLD: &str = "threshold";
    pub const DETECTION: &str = "detection";
    pub const RATE_CHECK: &str = "rate-check";
    pub const FALSE_ALARM_CHECK: &str = "false-alarm-check";
    pub const DROP: &str = "drop";
}

/// Build the stream for `(master_seed, purpose, indices)`.
pub fn stream(master_seed: u64, purpose: &str, indices: &[u64]) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update((purpose.len() as u64).to_le_bytes());
    hasher.update(purpose.as_bytes());
    for idx in indices {
        hasher.update(idx.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest[..32]);
    ChaCha20Rng::from_seed(seed)
}

/// Derive a child seed from a parent seed and an index (used for drops).
pub fn child_seed(master_seed: u64, purpose: &str, index: u64) -> u64 {
    let mut rng = stream(master_seed, purpose, &[index]);
    rng.random()
}

/// Circularly-symmetric standard complex Gaussian, `CN(0, 1)`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform phase on `[0, 2π)`.
pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * std::f64::consts::TAU
}
