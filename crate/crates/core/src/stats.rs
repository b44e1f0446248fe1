//! Summary statistics over `f64` samples.

/// Mean and sample standard deviation of a set of values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample (n - 1) standard deviation; zero for fewer than two values.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let m = mean(values);
        Some(Self {
            count: values.len(),
            mean: m,
            std: variance(values).sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// `[np - k*sigma, np + k*sigma]` for a Binomial(n, p) count.
pub fn binomial_interval(n: u64, p: f64, k_sigma: f64) -> (f64, f64) {
    let n = n as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    (n * p - k_sigma * sigma, n * p + k_sigma * sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_small_sample() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.count, 4);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!((s.min, s.max), (1.0, 4.0));
        assert!(Summary::of(&[]).is_none());
        assert_eq!(Summary::of(&[3.0]).unwrap().std, 0.0);
    }

    #[test]
    fn binomial_interval_around_mean() {
        // 60000 * 0.05 = 3000, sigma = sqrt(2850) ~ 53.4
        let (lo, hi) = binomial_interval(60_000, 0.05, 4.0);
        assert!((lo - (3000.0 - 4.0 * 2850f64.sqrt())).abs() < 1e-9);
        assert!(lo > 2700.0 && hi < 3300.0);
    }
}
