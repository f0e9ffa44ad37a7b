//! Deterministic random number generation.
//!
//! Everything random in this crate flows through [`SplitMix64`] so that any
//! artifact (a matrix, a noise vector, a training run) is reproducible from a
//! 64-bit seed alone, in any language that implements the same small contract:
//!
//! - `next_u64`: SplitMix64 as published by Vigna; the state advances by
//!   `0x9E3779B97F4A7C15` and the output is the mixed state.
//! - `next_f64`: top 53 bits scaled into `[0, 1)`.
//! - `next_normal`: Box-Muller, `sqrt(-2 ln u) * cos(2 pi v)` with `u` drawn
//!   from `(0, 1]` and `v` from `[0, 1)`, in that order. Each normal consumes
//!   exactly two raw outputs.
//! - `next_sign`: +1 when the top bit of the next raw output is zero.
//! - `next_index`: rejection sampling on the raw output, so indices are
//!   exactly uniform.
//!
//! Seeds for independent streams are derived with [`derive_seed`], which
//! hashes `(master seed, purpose label, index)` through SHA-256.

use sha2::{Digest, Sha256};

const GOLDEN_GAMMA: u64 = 0x9E3779B97F4A7C15;

/// SplitMix64 generator (Vigna, 2015). One `u64` of state.
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
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * 2f64.powi(-53)
    }

    /// Uniform in `(0, 1]`; safe as the log argument in Box-Muller.
    fn next_open_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * 2f64.powi(-53)
    }

    /// Standard normal via Box-Muller. Consumes exactly two raw outputs.
    pub fn next_normal(&mut self) -> f64 {
        let u = self.next_open_f64();
        let v = self.next_f64();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }

    /// +1.0 or -1.0 with equal probability, from the top bit.
    pub fn next_sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform index in `[0, n)` without modulo bias.
    pub fn next_index(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_index needs n > 0");
        // 2^64 mod n; outputs below this threshold are rejected so the
        // accepted range is an exact multiple of n.
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }
}

/// Derive an independent stream seed from `(master, label, index)`.
///
/// SHA-256 over the little-endian master seed, the label bytes, and the
/// little-endian index; the first eight digest bytes (little-endian) are the
/// derived seed.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_outputs_match_reference() {
        // Recomputed with an independent script implementing the published
        // SplitMix64 constants.
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 0x599ed017fb08fc85);
        assert_eq!(rng.next_u64(), 0x2c73f08458540fa5);
        assert_eq!(rng.next_u64(), 0x883ebce5a3f27c77);
        assert_eq!(rng.next_u64(), 0x3fbef740e9177b3f);
    }

    #[test]
    fn uniform_range() {
        let mut rng = SplitMix64::new(9);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = SplitMix64::new(42);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = rng.next_normal();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn sign_is_balanced() {
        let mut rng = SplitMix64::new(7);
        let n = 100_000;
        let sum: f64 = (0..n).map(|_| rng.next_sign()).sum();
        assert!(sum.abs() < 4.0 * (n as f64).sqrt());
    }

    #[test]
    fn index_covers_range_uniformly() {
        let mut rng = SplitMix64::new(3);
        let n = 7u64;
        let mut counts = [0u64; 7];
        for _ in 0..70_000 {
            counts[rng.next_index(n) as usize] += 1;
        }
        for &c in &counts {
            assert!((c as f64 - 10_000.0).abs() < 500.0, "count {c}");
        }
    }

    #[test]
    fn derive_seed_is_stable_and_distinct() {
        let a = derive_seed(1, "pool-matrix", 0);
        let b = derive_seed(1, "pool-matrix", 1);
        let c = derive_seed(1, "pool-pick", 0);
        let d = derive_seed(2, "pool-matrix", 0);
        assert_eq!(a, derive_seed(1, "pool-matrix", 0));
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
