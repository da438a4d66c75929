//! Seed derivation. One master seed feeds every random stream in a run;
//! each stream is identified by a fixed (purpose, counter) pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract; never reorder.
pub mod stream {
    pub const ROUND: u64 = 0x01;
    pub const SPLIT: u64 = 0x02;
    pub const SYNTH: u64 = 0x03;
    pub const FOLDS: u64 = 0x04;
    pub const REGRESSOR: u64 = 0x05;
    pub const RANDOM_ROUTER: u64 = 0x06;
    pub const TREE: u64 = 0x07;
    pub const DIAG_JOINT: u64 = 0x08;
    pub const DIAG_CAUSAL: u64 = 0x09;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for stream `tag`, counter `index` under `master`.
pub fn derive(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)).wrapping_add(index))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
