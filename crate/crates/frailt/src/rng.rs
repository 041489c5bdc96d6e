//! Deterministic pseudo-randomness for weight init, data shuffling, and sampling.
//!
//! Everything that consumes randomness in this crate goes through [`SplitMix64`]
//! so that runs are bit-reproducible from a single `u64` seed. The generator and
//! the categorical draw are fully specified here so an independent implementation
//! can reproduce token-for-token sampling output:
//!
//! * State update: `s += 0x9E3779B97F4A7C15`, then the finalizer
//!   `z = s; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!    z = (z ^ (z >> 27)) * 0x94D049BB133111EB; return z ^ (z >> 31)`
//!   (all arithmetic wrapping, SplitMix64 as published by Steele et al.).
//! * Uniform doubles: `(next_u64() >> 11) as f64 * 2^-53`, i.e. 53 high bits.
//! * Categorical draw over probabilities `p[0..n]`: draw `u = next_f64() * sum(p)`,
//!   walk `i` accumulating `u -= p[i]`, return the first `i` with `u <= 0`
//!   (falling back to the last index on floating-point shortfall).

/// SplitMix64 generator. Copyable state, one `u64` of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Raw generator state, for checkpointing.
    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn from_state(state: u64) -> Self {
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)`. Modulo bias is irrelevant at the sizes used here.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }

    /// Inverse-CDF draw from unnormalized probabilities. See module docs.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        debug_assert!(!probs.is_empty());
        let total: f64 = probs.iter().sum();
        let mut u = self.next_f64() * total;
        for (i, &p) in probs.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                return i;
            }
        }
        probs.len() - 1
    }
}

/// FNV-1a 64-bit hash, used for content digests (corpus, batches, weights).
/// Not cryptographic; it only needs to be stable and collision-unlikely.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
