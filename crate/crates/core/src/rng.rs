//! Seeded, splittable random streams.
//!
//! Every stream is ChaCha8 keyed by the experiment seed, with the 64-bit
//! ChaCha stream id selecting an independent sequence. Child streams are
//! addressed by `(seed, stream index)` and never depend on how many draws the
//! parent has made.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Identifier recorded alongside experiment outputs. Bump on any change to
/// seeding, stream derivation or sampling.
pub const RNG_ALGORITHM: &str = "chacha8-stream/v1";

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// Independent stream derived from this stream's identity and `index`.
    pub fn child(&self, index: u64) -> Self {
        Self::with_stream(self.seed, splitmix64(self.stream ^ splitmix64(index)))
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// True with probability `p`; exact for `p == 0` and `p == 1`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

/// Tensor of i.i.d. `N(mean, std^2)` draws.
pub fn gaussian_sample<T: Scalar>(rng: &mut Rng, shape: &[usize], mean: f64, std: f64) -> Result<Tensor<T>> {
    if !(std >= 0.0) || !std.is_finite() || !mean.is_finite() {
        return Err(Error::domain(format!(
            "gaussian needs finite mean and std >= 0, got mean {mean}, std {std}"
        )));
    }
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::lit(mean + std * rng.standard_normal())).collect();
    Tensor::new(shape, data)
}

/// Tensor of i.i.d. Bernoulli(`p`) draws as `0.0` / `1.0`.
pub fn bernoulli_mask<T: Scalar>(rng: &mut Rng, shape: &[usize], p: f64) -> Result<Tensor<T>> {
    check_probability(p, "bernoulli p")?;
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| if rng.bernoulli(p) { T::one() } else { T::zero() })
        .collect();
    Tensor::new(shape, data)
}

pub(crate) fn check_probability(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must lie in [0, 1], got {p}")))
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
    }

    #[test]
    fn children_ignore_parent_position() {
        let parent = Rng::new(3);
        let mut advanced = parent.clone();
        advanced.next_u64();
        assert_eq!(parent.child(5).next_u64(), advanced.child(5).next_u64());
        assert_ne!(parent.child(5).next_u64(), parent.child(6).next_u64());
        assert_ne!(parent.child(5).next_u64(), Rng::new(4).child(5).next_u64());
    }

    #[test]
    fn degenerate_gaussian() {
        let t: Tensor<f64> = gaussian_sample(&mut Rng::new(1), &[2], 0.0, 0.0).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0]);
        let t: Tensor<f64> = gaussian_sample(&mut Rng::new(1), &[3], 2.5, 0.0).unwrap();
        assert_eq!(t.data(), &[2.5; 3]);
    }

    #[test]
    fn gaussian_is_reproducible() {
        let a: Tensor<f64> = gaussian_sample(&mut Rng::new(9), &[64], 0.0, 1.0).unwrap();
        let b: Tensor<f64> = gaussian_sample(&mut Rng::new(9), &[64], 0.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_sample_mean() {
        let t: Tensor<f64> = gaussian_sample(&mut Rng::new(11), &[1_000_000], 0.0, 1.0).unwrap();
        let mean = t.sum() / 1e6;
        assert!(mean.abs() <= 0.004, "mean {mean}");
    }

    #[test]
    fn negative_std_rejected() {
        assert!(gaussian_sample::<f64>(&mut Rng::new(1), &[2], 0.0, -1.0).is_err());
    }

    #[test]
    fn degenerate_masks() {
        let ones: Tensor<f64> = bernoulli_mask(&mut Rng::new(2), &[100], 1.0).unwrap();
        assert!(ones.data().iter().all(|&v| v == 1.0));
        let zeros: Tensor<f64> = bernoulli_mask(&mut Rng::new(2), &[100], 0.0).unwrap();
        assert!(zeros.data().iter().all(|&v| v == 0.0));
        assert!(bernoulli_mask::<f64>(&mut Rng::new(2), &[1], 1.5).is_err());
        assert!(bernoulli_mask::<f64>(&mut Rng::new(2), &[1], -0.1).is_err());
    }

    #[test]
    fn half_mask_fraction() {
        let m: Tensor<f64> = bernoulli_mask(&mut Rng::new(5), &[1_000_000], 0.5).unwrap();
        let frac = m.sum() / 1e6;
        assert!((0.498..=0.502).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut xs: Vec<u32> = (0..50).collect();
        Rng::new(8).shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(xs, sorted);
    }
}
