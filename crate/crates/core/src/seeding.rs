//! Deterministic seed derivation for replicate streams.
//!
//! Every randomized component takes an explicit 64-bit seed. Sub-streams
//! (replicates, restarts, sweep cells) derive their seeds with a fixed
//! mixing function so that results do not depend on scheduling order and
//! stay stable across releases (no reliance on `std` hashers).

/// Named sub-stream identifiers, kept distinct so unrelated consumers of the
/// same base seed never collide.
pub mod stream {
    pub const GMM_SAMPLE: u64 = 0x01;
    pub const SBM_SAMPLE: u64 = 0x02;
    pub const PERMUTATION: u64 = 0x03;
    pub const KMEDOIDS_RESTART: u64 = 0x04;
    pub const SWEEP_CELL: u64 = 0x05;
    pub const BAYES_REDUCED: u64 = 0x06;
    pub const BAYES_FULL: u64 = 0x07;
    pub const SOLVER_RESTART: u64 = 0x08;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for sub-stream `stream`, element `index`, from `base`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let a = splitmix64(base ^ splitmix64(stream));
    splitmix64(a ^ splitmix64(index))
}

/// Two-index variant used by sweep cells: (value index, replicate index).
pub fn derive_seed2(base: u64, stream: u64, i: u64, j: u64) -> u64 {
    derive_seed(derive_seed(base, stream, i), stream ^ 0xA5A5_A5A5_A5A5_A5A5, j)
}
