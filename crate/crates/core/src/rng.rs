//! Seed and stream derivation. Every random draw in the crate goes through a
//! ChaCha8 generator keyed by `(seed, domain)` with a per-item stream number,
//! which keeps results reproducible across platforms and evaluation orders.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Separates the key spaces of independent consumers of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Patterns = 1,
    Noise = 2,
}

/// Generator for item `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed of `master` for a path of labels, e.g. `(m, photons, replicate)`.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(master), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}
