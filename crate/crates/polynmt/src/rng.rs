//! Seeded random number generation.
//!
//! Everything stochastic in this crate (init, dropout, batch shuffling)
//! draws from [`Rng`], a thin wrapper over ChaCha8 with hand-rolled
//! distribution helpers. Keeping the distributions in-house pins the exact
//! bit stream, which the reproducibility guarantees depend on: the same
//! seed must produce the same model on any platform.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct Rng {
    inner: ChaCha8Rng,
    /// Spare deviate from the last Box-Muller draw.
    cached_gauss: Option<f64>,
}

/// Mix a base seed with a stream index (step, epoch, ...) into a fresh seed.
///
/// SplitMix64-style finalizer: consecutive indices give well-separated
/// streams even for small seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { inner: ChaCha8Rng::seed_from_u64(seed), cached_gauss: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1): top 53 bits of a u64 scaled by 2^-53.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    /// tiny relative to 2^64, so the bias is far below any tolerance we test.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.inner.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller. Draws two uniforms, caches the
    /// second deviate.
    pub fn gauss(&mut self) -> f64 {
        if let Some(z) = self.cached_gauss.take() {
            return z;
        }
        loop {
            let u1 = self.uniform();
            if u1 <= f64::MIN_POSITIVE {
                continue; // avoid ln(0)
            }
            let u2 = self.uniform();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            self.cached_gauss = Some(r * theta.sin());
            return r * theta.cos();
        }
    }

    /// N(0, std^2) truncated to [-2 std, 2 std] by resampling.
    pub fn truncated_gauss(&mut self, std: f64) -> f64 {
        loop {
            let z = self.gauss();
            if z.abs() <= 2.0 {
                return z * std;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..100 {
            assert!(a.uniform() == b.uniform());
            assert!(a.gauss() == b.gauss());
        }
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(2);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn uniform_in_unit_interval_with_sane_mean() {
        let mut rng = Rng::new(42);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn gauss_moments() {
        let mut rng = Rng::new(9);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let z = rng.gauss();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn truncated_gauss_stays_inside_two_sigma() {
        let mut rng = Rng::new(3);
        let std = 0.044194173824159216; // 512^-0.5
        for _ in 0..50_000 {
            let x = rng.truncated_gauss(std);
            assert!(x.abs() <= 2.0 * std + 1e-15);
        }
    }

    #[test]
    fn shuffle_is_a_permutation_and_seed_stable() {
        let mut rng = Rng::new(11);
        let mut v: Vec<u32> = (0..20).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());

        let mut rng2 = Rng::new(11);
        let mut v2: Vec<u32> = (0..20).collect();
        rng2.shuffle(&mut v2);
        assert_eq!(v, v2);
    }

    #[test]
    fn range_respects_bounds() {
        let mut rng = Rng::new(5);
        let (lo, hi) = (-0.0765, 0.0765);
        for _ in 0..10_000 {
            let x = rng.range(lo, hi);
            assert!(x >= lo && x < hi);
        }
    }
}
