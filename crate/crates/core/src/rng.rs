//! Deterministic random sources.
//!
//! Sequential draws (route layout, object placement) use ChaCha8, whose
//! output stream is specified independently of platform and word size.
//! Per-ray and per-sample noise uses a stateless counter-based generator so
//! that results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Sequential generator for a named sub-stream of a scenario seed.
pub fn seeded(seed: u64, stream: &str) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Mixes a textual stream label into a seed (FNV-1a followed by SplitMix64).
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stateless noise keyed by `(key, a, b)` counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterNoise {
    key: u64,
}

impl CounterNoise {
    pub fn new(seed: u64, stream: &str) -> Self {
        Self {
            key: derive_seed(seed, stream),
        }
    }

    pub fn bits(&self, a: u64, b: u64, lane: u64) -> u64 {
        splitmix64(self.key ^ splitmix64(a ^ splitmix64(b.wrapping_mul(4).wrapping_add(lane))))
    }

    /// Uniform in (0, 1].
    pub fn uniform(&self, a: u64, b: u64, lane: u64) -> f64 {
        ((self.bits(a, b, lane) >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller.
    pub fn gaussian(&self, a: u64, b: u64) -> f64 {
        let u1 = self.uniform(a, b, 0);
        let u2 = self.uniform(a, b, 1);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
