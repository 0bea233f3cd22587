//! Deterministic seed derivation and counter-based random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed keyed by an ordered tuple of integers; independent of evaluation order.
pub fn derive_seed(master: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix64(master), |acc, &k| mix64(acc ^ mix64(k)))
}

/// Seed for replication `rep` at sample size `n`.
pub fn replication_seed(master: u64, n: usize, rep: usize) -> u64 {
    derive_seed(master, &[n as u64, rep as u64])
}

/// ChaCha stream keyed by `seed`.
pub fn stream(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
