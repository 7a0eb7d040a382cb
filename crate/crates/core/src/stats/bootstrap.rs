//! Nonparametric bootstrap.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::rng::StreamRng;

/// Default number of bootstrap resamples.
pub const DEFAULT_RESAMPLES: usize = 200;

/// Bootstrap standard error of `statistic` over resamples of `values`.
pub fn bootstrap_se<F>(values: &[f64], statistic: F, resamples: usize, rng: &mut StreamRng) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    if values.len() < 2 || resamples < 2 {
        return 0.0;
    }
    let mut buf = vec![0.0; values.len()];
    let stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.random_range(0..values.len())];
            }
            statistic(&buf)
        })
        .collect();
    sample_sd(&stats)
}

/// Bootstrap standard error of the mean.
pub fn bootstrap_mean_se(values: &[f64], resamples: usize, rng: &mut StreamRng) -> f64 {
    bootstrap_se(values, mean, resamples, rng)
}

/// Multinomial resample of a count vector (same total).
pub fn resample_counts(counts: &[u64], rng: &mut StreamRng) -> Vec<u64> {
    let total: u64 = counts.iter().sum();
    let mut left = total;
    let mut mass_left = total as f64;
    let mut out = Vec::with_capacity(counts.len());
    for (i, &c) in counts.iter().enumerate() {
        if left == 0 || mass_left <= 0.0 {
            out.push(0);
            continue;
        }
        let n = if i + 1 == counts.len() {
            left
        } else {
            let p = (c as f64 / mass_left).clamp(0.0, 1.0);
            Binomial::new(left, p).expect("valid binomial").sample(rng)
        };
        out.push(n);
        left -= n;
        mass_left -= c as f64;
    }
    out
}

/// Multinomial draw of `n` items over cells with probabilities `probs`
/// (renormalized).
pub fn multinomial(n: u64, probs: &[f64], rng: &mut StreamRng) -> Vec<u64> {
    let mut left = n;
    let mut mass_left: f64 = probs.iter().sum();
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 || mass_left <= 0.0 {
            out.push(0);
            continue;
        }
        let k = if i + 1 == probs.len() {
            left
        } else {
            Binomial::new(left, (p / mass_left).clamp(0.0, 1.0))
                .expect("valid binomial")
                .sample(rng)
        };
        out.push(k);
        left -= k;
        mass_left -= p;
    }
    out
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn mean_se_matches_formula() {
        let mut rng = RngStream::new(1, 0).rng();
        let xs: Vec<f64> = (0..2000).map(|i| (i % 10) as f64).collect();
        let se = bootstrap_mean_se(&xs, 400, &mut rng);
        let exact = sample_sd(&xs) / (xs.len() as f64).sqrt();
        assert!((se / exact - 1.0).abs() < 0.15, "{se} vs {exact}");
    }

    #[test]
    fn constant_data_has_zero_se() {
        let mut rng = RngStream::new(1, 0).rng();
        assert_eq!(bootstrap_mean_se(&[2.0; 50], 200, &mut rng), 0.0);
    }

    #[test]
    fn multinomial_totals_and_means() {
        let mut rng = RngStream::new(3, 0).rng();
        let mut acc = [0u64; 3];
        for _ in 0..200 {
            let c = multinomial(1000, &[0.2, 0.0, 0.8], &mut rng);
            assert_eq!(c.iter().sum::<u64>(), 1000);
            assert_eq!(c[1], 0);
            acc[0] += c[0];
        }
        assert!((acc[0] as f64 / 200_000.0 - 0.2).abs() < 0.005);
    }

    #[test]
    fn resampled_counts_keep_total_and_support() {
        let mut rng = RngStream::new(2, 0).rng();
        let c = [10, 0, 30, 60];
        for _ in 0..100 {
            let r = resample_counts(&c, &mut rng);
            assert_eq!(r.iter().sum::<u64>(), 100);
            assert_eq!(r[1], 0);
        }
    }
}
