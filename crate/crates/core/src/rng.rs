//! Seed handling.
//!
//! All randomness goes through [`ChaCha8Rng`] so streams are stable across
//! platforms and crate versions. Stage seeds are derived from the master
//! seed as the first 8 bytes (little-endian) of
//! `SHA-256(master_seed_le || 0x00 || stage_name)`; no two stages share
//! raw generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update([0u8]);
    h.update(stage.as_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

/// Coreset size for `n` examples at pruning ratio `r`, rounded half away
/// from zero. Shared by every selector so budgets are comparable.
pub fn keep_count(n: usize, r: f64) -> usize {
    let k = (n as f64 * (1.0 - r)).round();
    (k.max(0.0) as usize).min(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_per_stage() {
        let a = derive_seed(7, "label");
        let b = derive_seed(7, "score");
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(7, "label"));
        assert_ne!(a, derive_seed(8, "label"));
    }

    #[test]
    fn keep_count_rounds_half_away() {
        assert_eq!(keep_count(7, 0.5), 4);
        assert_eq!(keep_count(10, 0.5), 5);
        assert_eq!(keep_count(1000, 0.9), 100);
        assert_eq!(keep_count(10, 0.0), 10);
    }
}
