//! Deterministic child-seed derivation.
//!
//! Every random stream in the toolkit is keyed by
//! `(master_seed, purpose, feature, replicate)`, so results do not depend on
//! execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Unrestricted,
    Gcmr,
    Gknock,
    Synth,
    Oracle,
    Split,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Unrestricted => 0x756e_7265_7374,
            Purpose::Gcmr => 0x6763_6d72,
            Purpose::Gknock => 0x676b_6e6f_636b,
            Purpose::Synth => 0x0073_796e_7468,
            Purpose::Oracle => 0x6f72_6163_6c65,
            Purpose::Split => 0x0073_706c_6974,
        }
    }
}

/// Feature index used for streams shared by all features of a replicate.
pub const ALL_FEATURES: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn child_seed(&self, purpose: Purpose, feature: u64, replicate: u64) -> u64 {
        let mut h = splitmix64(self.master_seed);
        for word in [purpose.tag(), feature, replicate] {
            h = splitmix64(h ^ word);
        }
        h
    }

    pub fn rng(&self, purpose: Purpose, feature: u64, replicate: u64) -> ChaCha8Rng {
        rng_from(self.child_seed(purpose, feature, replicate))
    }
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
