//! Compensated sums, sample moments and normal/binomial quantiles.

use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}

pub fn sum(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value()
}

pub fn mean(xs: &[f64]) -> f64 {
    sum(xs) / xs.len() as f64
}

/// Sample moments of a batch of values (two-pass, compensated).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased variance.
    pub variance: f64,
    /// `m3 / m2^{3/2}` with biased central moments.
    pub skewness: f64,
    /// `m4 / m2² − 3` with biased central moments.
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Moments {
        let n = xs.len();
        let mean = mean(xs);
        let mut s2 = CompensatedSum::new();
        let mut s3 = CompensatedSum::new();
        let mut s4 = CompensatedSum::new();
        for &x in xs {
            let d = x - mean;
            let d2 = d * d;
            s2.add(d2);
            s3.add(d2 * d);
            s4.add(d2 * d2);
        }
        let nf = n as f64;
        let m2 = s2.value() / nf;
        let m3 = s3.value() / nf;
        let m4 = s4.value() / nf;
        Moments {
            n,
            mean,
            variance: s2.value() / (nf - 1.0),
            skewness: if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 },
            excess_kurtosis: if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 },
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }

    /// Standard error of the sample skewness under normality.
    pub fn skewness_se(&self) -> f64 {
        let n = self.n as f64;
        (6.0 * n * (n - 1.0) / ((n - 2.0) * (n + 1.0) * (n + 3.0))).sqrt()
    }

    /// Standard error of the sample excess kurtosis under normality.
    pub fn kurtosis_se(&self) -> f64 {
        let n = self.n as f64;
        (24.0 * n * (n - 1.0).powi(2) / ((n - 3.0) * (n - 2.0) * (n + 3.0) * (n + 5.0))).sqrt()
    }
}

/// Standard error of the sample excess kurtosis without assuming normality,
/// from the empirical influence function of `m4 / m2²`.
pub fn kurtosis_influence_se(xs: &[f64], m: &Moments) -> f64 {
    let n = xs.len() as f64;
    let (mut c2, mut c3, mut c4) = (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    for &x in xs {
        let d = x - m.mean;
        c2.add(d * d);
        c3.add(d * d * d);
        c4.add(d * d * d * d);
    }
    let (mu2, mu3, mu4) = (c2.value() / n, c3.value() / n, c4.value() / n);
    let inf: CompensatedSum = xs
        .iter()
        .map(|&x| {
            let d = x - m.mean;
            let v = (d.powi(4) - mu4 - 4.0 * mu3 * d) / (mu2 * mu2) - 2.0 * mu4 * (d * d - mu2) / mu2.powi(3);
            v * v
        })
        .collect();
    (inf.value() / n / n).sqrt()
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `|z|` threshold of a two-sided test at level `alpha`.
pub fn two_sided_z(alpha: f64) -> f64 {
    normal_quantile(1.0 - 0.5 * alpha)
}

/// Central `level` interval for the number of successes of `Binomial(n, p)`.
pub fn binomial_interval(n: u64, p: f64, level: f64) -> (u64, u64) {
    let b = Binomial::new(p, n).expect("valid binomial");
    let tail = 0.5 * (1.0 - level);
    (b.inverse_cdf(tail), b.inverse_cdf(1.0 - tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn compensated_sum_beats_naive() {
        let xs: Vec<f64> = std::iter::once(1e16)
            .chain(std::iter::repeat_n(1.0, 1000))
            .chain(std::iter::once(-1e16))
            .collect();
        assert_eq!(sum(&xs), 1000.0);
    }

    #[test]
    fn sum_is_order_insensitive_for_reversal() {
        let xs: Vec<f64> = (0..10_000).map(|i| ((i as f64) * 0.37).sin() * 1e3).collect();
        let mut rev = xs.clone();
        rev.reverse();
        assert!((sum(&xs) - sum(&rev)).abs() < 1e-9);
    }

    #[test]
    fn moments_of_symmetric_two_point() {
        let xs = [-1.0, 1.0, -1.0, 1.0];
        let m = Moments::of(&xs);
        assert_eq!(m.mean, 0.0);
        assert_abs_diff_eq!(m.variance, 4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.skewness, 0.0);
        assert_abs_diff_eq!(m.excess_kurtosis, -2.0, epsilon = 1e-15);
    }

    #[test]
    fn kurtosis_se_approaches_asymptote() {
        let m = Moments {
            n: 100_000,
            mean: 0.0,
            variance: 1.0,
            skewness: 0.0,
            excess_kurtosis: 0.0,
        };
        assert_abs_diff_eq!(m.kurtosis_se(), (24.0f64 / 1e5).sqrt(), epsilon = 1e-5);
        assert_abs_diff_eq!(m.skewness_se(), (6.0f64 / 1e5).sqrt(), epsilon = 1e-5);
    }

    #[test]
    fn quantiles() {
        assert_abs_diff_eq!(two_sided_z(0.05), 1.959964, epsilon = 1e-6);
        assert_abs_diff_eq!(two_sided_z(0.01), 2.575829, epsilon = 1e-6);
        let (lo, hi) = binomial_interval(200, 0.05, 0.99);
        assert!(lo <= 10 && hi >= 10 && lo >= 2 && hi <= 20);
    }
}
