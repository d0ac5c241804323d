// SPDX-License-Identifier: Apache-2.0
//! Running moments and small regression helpers.

use serde::Serialize;

/// Welford accumulator for mean and unbiased variance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        self.mean += d * nb / n as f64;
        self.m2 += other.m2 + d * d * na * nb / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance with `n − 1` denominator; NaN for fewer than two points.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            f64::NAN
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        iter.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// Least-squares line `y ≈ a + b x`; returns `(b, a)`. `None` if `x` is constant.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((b, my - b * mx))
}

/// Slope of `log y` against `log t`; `None` if any value is non-positive.
pub fn log_log_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    if t.iter().chain(y).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols(&lx, &ly).map(|(b, _)| b)
}

/// Mean and 95% half-width from non-overlapping batch means.
pub fn batch_means(values: &[f64], n_batches: usize) -> Option<(f64, f64)> {
    if n_batches < 2 || values.len() < n_batches {
        return None;
    }
    let size = values.len() / n_batches;
    let m: Moments = (0..n_batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    Some((m.mean(), 1.96 * m.std_error()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_moments() {
        let m: Moments = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0].into_iter().collect();
        assert_eq!(m.mean(), 5.0);
        assert!((m.variance() - 32.0 / 7.0).abs() < 1e-14);
        assert!(Moments::default().variance().is_nan());
    }

    #[test]
    fn slope_of_power_law() {
        let t = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = t.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&t, &y).unwrap() - 1.5).abs() < 1e-12);
        assert!(log_log_slope(&t, &[1.0, 0.0, 1.0, 1.0]).is_none());
        assert!(ols(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in prop::collection::vec(-1e3f64..1e3, 2..60), cut in 0usize..60) {
            let cut = cut.min(xs.len());
            let all: Moments = xs.iter().copied().collect();
            let mut a: Moments = xs[..cut].iter().copied().collect();
            let b: Moments = xs[cut..].iter().copied().collect();
            a.merge(&b);
            prop_assert_eq!(a.count(), all.count());
            prop_assert!((a.mean() - all.mean()).abs() <= 1e-9 * (1.0 + all.mean().abs()));
            prop_assert!((a.variance() - all.variance()).abs() <= 1e-8 * (1.0 + all.variance()));
        }
    }
}
