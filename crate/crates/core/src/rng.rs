//! Counter-based splittable random streams.
//!
//! Every stream is a pair `(key, counter)`. Output words are produced by a
//! splitmix64-style finalizer of `key + counter·φ`, and child streams derive a
//! fresh key from `(key, child index)` through a separate mixing domain, so a
//! stream's outputs and its children's keys never collide. Deriving a child
//! reads only the key: consuming randomness from a parent does not disturb the
//! streams of already-derived (or yet-to-be-derived) children. This is what
//! makes genealogies reproducible individual-by-individual: the stream of an
//! individual is keyed by its path from the root, independent of traversal
//! order, population size, or thread scheduling.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const CHILD_DOMAIN: u64 = 0xD1B5_4A32_D192_ED03;
const SEED_DOMAIN: u64 = 0x6A09_E667_F3BC_C909;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// Deterministic splittable stream of uniform words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn from_seed(seed: u64) -> Self {
        RngStream {
            key: mix64(seed ^ SEED_DOMAIN),
            counter: 0,
        }
    }

    /// Derives an independent stream; the same `(parent, index)` pair always
    /// yields the same child, regardless of how much the parent has been used.
    pub fn child(&self, index: u64) -> Self {
        RngStream {
            key: mix64(self.key ^ mix64(index ^ CHILD_DOMAIN)),
            counter: 0,
        }
    }

    /// Key identifying this stream, for reproduction records.
    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on `[0, 1)` with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`; safe to feed into quantile
    /// functions that are infinite at the endpoints.
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit-rate exponential variate.
    pub fn next_exp(&mut self) -> f64 {
        -(-self.next_f64()).ln_1p()
    }
}
