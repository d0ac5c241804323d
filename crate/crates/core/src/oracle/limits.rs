// SPDX-License-Identifier: Apache-2.0
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{AsymptoticCovariance, OracleError};
use crate::rng::RngStream;

/// Draws from the four limiting laws, one entry per sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitSamples {
    /// `W₁(1) W₂(1)`.
    pub clr: Vec<f64>,
    /// `∫₀¹ (W₁(1) − W₁(s)) dW₂(s)`.
    pub int_clr: Vec<f64>,
    /// `π(f) W₂(1)`.
    pub lr: Vec<f64>,
    /// `π(f) ∫₀¹ (1 − s) dW₂(s)`.
    pub int_lr: Vec<f64>,
}

/// Euler scheme for the correlated pair `(W₁, W₂)` with per-unit-time
/// covariance from `cov`. Sample `i` uses stream `i` of `seed`.
pub fn sample_limit_distributions(
    cov: &AsymptoticCovariance,
    pi_f: f64,
    n_steps: usize,
    n_samples: usize,
    seed: u64,
) -> Result<LimitSamples, OracleError> {
    if n_steps < 100 {
        return Err(OracleError::Invalid(format!("n_steps must be at least 100, got {n_steps}")));
    }
    if !cov.is_psd() {
        return Err(OracleError::NotPsd(cov.det()));
    }
    let l11 = cov.sigma11_rate.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { cov.sigma12_rate / l11 } else { 0.0 };
    let l22 = (cov.sigma22_rate - l21 * l21).max(0.0).sqrt();
    let dt = 1.0 / n_steps as f64;
    let sdt = dt.sqrt();

    let draws: Vec<[f64; 4]> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i).rng();
            let (mut w1, mut w2) = (0.0, 0.0);
            // Σ W₁(s_i) ΔW₂_i and Σ (1 − s_i) ΔW₂_i at left endpoints
            let (mut w1_dw2, mut ramp) = (0.0, 0.0);
            for step in 0..n_steps {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let dw1 = sdt * l11 * z1;
                let dw2 = sdt * (l21 * z1 + l22 * z2);
                w1_dw2 += w1 * dw2;
                ramp += (1.0 - step as f64 * dt) * dw2;
                w1 += dw1;
                w2 += dw2;
            }
            [w1 * w2, w1 * w2 - w1_dw2, pi_f * w2, pi_f * ramp]
        })
        .collect();
    let pick = |k: usize| draws.iter().map(|d| d[k]).collect::<Vec<_>>();
    Ok(LimitSamples {
        clr: pick(0),
        int_clr: pick(1),
        lr: pick(2),
        int_lr: pick(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rates_give_zero_samples() {
        let cov = AsymptoticCovariance {
            sigma11_rate: 0.0,
            sigma12_rate: 0.0,
            sigma22_rate: 0.0,
        };
        let s = sample_limit_distributions(&cov, 2.0, 100, 50, 1).unwrap();
        for v in [&s.clr, &s.int_clr, &s.lr, &s.int_lr] {
            assert!(v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let bad = AsymptoticCovariance {
            sigma11_rate: 1.0,
            sigma12_rate: 2.0,
            sigma22_rate: 1.0,
        };
        assert!(sample_limit_distributions(&bad, 0.0, 100, 10, 1).is_err());
        let ok = AsymptoticCovariance {
            sigma11_rate: 1.0,
            sigma12_rate: 0.0,
            sigma22_rate: 1.0,
        };
        assert!(sample_limit_distributions(&ok, 0.0, 99, 10, 1).is_err());
        let a = sample_limit_distributions(&ok, 0.5, 100, 20, 3).unwrap();
        let b = sample_limit_distributions(&ok, 0.5, 100, 20, 3).unwrap();
        assert_eq!(a, b);
    }
}
