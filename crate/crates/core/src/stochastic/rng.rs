//! Deterministic pseudo-random numbers for simulation.
//!
//! The generator is xoshiro256** (Blackman & Vigna), seeded through
//! SplitMix64. Both algorithms are public-domain, fully specified integer
//! recurrences, so a trajectory is a pure function of the 64-bit seed and
//! reproducible across builds. Not cryptographic.
//!
//! Replica streams: replica `r` of an ensemble uses seed
//! `base_seed + r * 0x9E3779B97F4A7C15` (the SplitMix64 increment), i.e.
//! consecutive states of the SplitMix64 counter, which keeps streams
//! decorrelated while replica 0 reproduces a plain single run with
//! `base_seed`.

/// SplitMix64 increment, also used to derive replica seeds.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for ensemble replica `r` derived from a base seed.
pub fn replica_seed(base_seed: u64, replica: u64) -> u64 {
    base_seed.wrapping_add(replica.wrapping_mul(GOLDEN_GAMMA))
}

/// xoshiro256** generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Expand a 64-bit seed into the full state with SplitMix64.
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        Rng {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)`: the top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval `(0, 1)`.
    pub fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// Exponential waiting time with the given rate, strictly positive.
    pub fn exp(&mut self, rate: f64) -> f64 {
        -self.next_f64_open().ln() / rate
    }
}
