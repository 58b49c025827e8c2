//! Portable seeded random stream.
//!
//! xoshiro256** seeded from a `u64` through SplitMix64. Derived draws:
//!
//! * uniform `[0, 1)`: `(next_u64 >> 11) · 2⁻⁵³`
//! * uniform `(0, 1)`: `((next_u64 >> 11) + 0.5) · 2⁻⁵³`
//! * normal pair: Box–Muller on two open uniforms `u1, u2`:
//!   `√(−2 ln u1) · (cos 2πu2, sin 2πu2)`
//! * Poisson(λ): inversion by sequential search on one `[0, 1)` uniform.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Largest Poisson mean accepted; `exp(−λ)` stays representable.
pub const MAX_POISSON_MEAN: f64 = 700.0;

#[derive(Debug, Clone)]
pub struct Stream {
    inner: Xoshiro256StarStar,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_53
    }

    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * INV_2_53
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// `λ` must lie in `[0, MAX_POISSON_MEAN]`.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        debug_assert!((0.0..=MAX_POISSON_MEAN).contains(&mean));
        let u = self.uniform();
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u >= cdf {
            k += 1;
            p *= mean / k as f64;
            if p == 0.0 {
                break;
            }
            cdf += p;
        }
        k
    }

    /// Uniform index in `0..n` by rejection (unbiased).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// In-place Fisher–Yates shuffle, drawing from the last index down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
