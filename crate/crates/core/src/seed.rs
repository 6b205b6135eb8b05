//! Deterministic seed derivation.
//!
//! Every random stream in a campaign is derived from one master seed by
//! hashing it together with a small tuple of integers that names the stream.
//! This keeps streams independent of evaluation order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a path of stream labels.
pub fn derive(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(parent ^ GOLDEN), |acc, &label| {
        mix64(acc.wrapping_add(GOLDEN).wrapping_add(mix64(label)))
    })
}

/// Stream labels used across the crate.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const ACQUISITION: u64 = 2;
    pub const ROLLOUT: u64 = 3;
    pub const RANDOM_BASELINE: u64 = 4;
    pub const GRID_FILL: u64 = 5;
    pub const RUN: u64 = 6;
    pub const QMC: u64 = 7;
}
