//! Keyed random streams.
//!
//! Every random draw in the crate comes from a [`StreamKey`]: a (seed, index,
//! purpose) triple hashed into a ChaCha8 seed. Scenario `j` of an evaluation
//! therefore sees the same numbers whichever thread runs it, and the price
//! stream of a scenario never depends on how many actions were sampled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Price = 1,
    Variance = 2,
    Deaths = 3,
    Action = 4,
    Init = 5,
    Pricing = 6,
    Scenario = 7,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub index: u64,
    pub purpose: Purpose,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        Self { seed, index: 0, purpose: Purpose::Scenario }
    }

    pub fn with_index(self, index: u64) -> Self {
        Self { index, ..self }
    }

    pub fn with_purpose(self, purpose: Purpose) -> Self {
        Self { purpose, ..self }
    }

    /// A nested key: the child of `(seed, index)` numbered `k`, starting at
    /// index 0 so that `with_index` on it keeps children apart.
    ///
    /// Children of different parents (or different `k`) are distinct with
    /// overwhelming probability.
    pub fn child(self, k: u64) -> Self {
        let parent = splitmix64(self.seed ^ splitmix64(self.index.wrapping_add(0x5151)));
        Self { seed: splitmix64(parent ^ splitmix64(k.wrapping_add(0xA3A3))), index: 0, purpose: self.purpose }
    }

    pub fn rng(&self) -> SimRng {
        let mut bytes = [0u8; 32];
        let mut h = splitmix64(self.seed);
        h = splitmix64(h ^ self.index);
        h = splitmix64(h ^ (self.purpose as u64));
        for chunk in bytes.chunks_exact_mut(8) {
            h = splitmix64(h);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        SimRng::from_seed(bytes)
    }
}
