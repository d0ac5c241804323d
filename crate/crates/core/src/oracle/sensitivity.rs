// SPDX-License-Identifier: Apache-2.0
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::{Fsp, FspSolution, OracleError, Truncation};
use crate::network::{Observable, RateLaw, ReactionNetwork, State};
use crate::ssa::Compensated;

/// Per-unit-time covariance rates of the pair `(W₁, W₂)` driving the limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticCovariance {
    pub sigma11_rate: f64,
    pub sigma12_rate: f64,
    pub sigma22_rate: f64,
}

impl AsymptoticCovariance {
    pub fn det(&self) -> f64 {
        self.sigma11_rate * self.sigma22_rate - self.sigma12_rate * self.sigma12_rate
    }

    /// PSD up to a relative rounding allowance.
    pub fn is_psd(&self) -> bool {
        let scale = (self.sigma11_rate.abs() * self.sigma22_rate.abs()).max(f64::MIN_POSITIVE);
        self.sigma11_rate >= 0.0 && self.sigma22_rate >= 0.0 && self.det() >= -1e-12 * scale
    }
}

/// Steady-state first moments of an affine network and their gradient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearMoments {
    pub means: Vec<f64>,
    /// `⟨w, m⟩` for the requested observable.
    pub value: f64,
    /// `∂⟨w, m⟩/∂c_k` for every parameter.
    pub gradient: Vec<f64>,
}

impl Fsp<'_> {
    /// `Σ_x π(x) Σ_j g(j, x) Δ_j f̂(x)` over transitions kept by the truncation.
    fn transition_sum(
        &self,
        sol: &FspSolution,
        mut g: impl FnMut(usize, &State, f64) -> Option<f64>,
    ) -> Result<f64, OracleError> {
        let f_hat = sol.f_hat()?;
        let mut acc = Compensated::default();
        for (i, x) in self.truncation.states().iter().enumerate() {
            let mut row = Compensated::default();
            for (j, r) in self.net.reactions().iter().enumerate() {
                let Some(y) = x.shifted(&r.net) else { continue };
                let Some(iy) = self.truncation.index_of(&y) else {
                    continue;
                };
                let delta = f_hat[iy] - f_hat[i];
                if let Some(v) = g(j, x, delta) {
                    row.add(v);
                }
            }
            acc.add(sol.pi[i] * row.value());
        }
        Ok(acc.value())
    }

    fn check_param(&self, k: usize) -> Result<(), OracleError> {
        if k >= self.net.n_parameters() {
            return Err(OracleError::Invalid(format!("parameter index {k} out of range")));
        }
        Ok(())
    }

    /// `Σ_j Σ_x π(x) ∂a_j/∂c_k(x) Δ_j f̂(x)`.
    pub fn sensitivity(&self, sol: &FspSolution, k: usize) -> Result<f64, OracleError> {
        self.check_param(k)?;
        let c = &self.c;
        let net = self.net;
        self.transition_sum(sol, |j, x, d| {
            let da = net.reactions()[j].rate_derivative(x, c, k);
            (da != 0.0).then_some(da * d)
        })
    }

    /// `c_k⁻¹ Σ_{j governed by k} Σ_x π(x) a_j(x) Δ_j f̂(x)`; mass action only.
    pub fn sensitivity_mass_action(&self, sol: &FspSolution, k: usize) -> Result<f64, OracleError> {
        self.check_param(k)?;
        let using = self.net.reactions_using(k);
        for &j in &using {
            if !self.net.reactions()[j].rate_law.is_mass_action() {
                return Err(OracleError::Invalid(format!(
                    "reaction {j} is not mass action"
                )));
            }
        }
        let c = &self.c;
        let net = self.net;
        let s = self.transition_sum(sol, |j, x, d| {
            using.contains(&j).then(|| net.reactions()[j].rate(x, c) * d)
        })?;
        Ok(s / c[k])
    }

    pub fn covariance(&self, sol: &FspSolution, k: usize) -> Result<AsymptoticCovariance, OracleError> {
        self.check_param(k)?;
        let c = &self.c;
        let net = self.net;
        let s11 = self.transition_sum(sol, |j, x, d| {
            let a = net.reactions()[j].rate(x, c);
            (a > 0.0).then_some(a * d * d)
        })?;
        let s12 = self.sensitivity(sol, k)?;
        // ⟨Z⟩ rate: Σ_j (∂a_j)² / a_j, which is π(a_k)/c_k² under mass action
        let mut s22 = Compensated::default();
        for (i, x) in self.truncation.states().iter().enumerate() {
            for r in net.reactions() {
                let a = r.rate(x, c);
                let da = r.rate_derivative(x, c, k);
                if a > 0.0 && da != 0.0 {
                    s22.add(sol.pi[i] * da * da / a);
                }
            }
        }
        let cov = AsymptoticCovariance {
            sigma11_rate: s11,
            sigma12_rate: s12,
            sigma22_rate: s22.value(),
        };
        if !cov.is_psd() {
            return Err(OracleError::NotPsd(cov.det()));
        }
        Ok(cov)
    }
}

pub fn sensitivity_direct(
    net: &ReactionNetwork,
    c: &[f64],
    trunc: &Truncation,
    f: &Observable,
    k: usize,
) -> Result<f64, OracleError> {
    let fsp = Fsp::new(net, c, trunc.clone())?;
    let sol = fsp.solve(f)?;
    fsp.sensitivity(&sol, k)
}

pub fn sensitivity_direct_mass_action(
    net: &ReactionNetwork,
    c: &[f64],
    trunc: &Truncation,
    f: &Observable,
    k: usize,
) -> Result<f64, OracleError> {
    let fsp = Fsp::new(net, c, trunc.clone())?;
    let sol = fsp.solve(f)?;
    fsp.sensitivity_mass_action(&sol, k)
}

/// Central difference of `π_c(f)` in `c_k` with step `h_rel · c_k`.
pub fn sensitivity_fd(
    net: &ReactionNetwork,
    c: &[f64],
    trunc: &Truncation,
    f: &Observable,
    k: usize,
    h_rel: f64,
) -> Result<f64, OracleError> {
    net.check_params(c)?;
    if k >= c.len() {
        return Err(OracleError::Invalid(format!("parameter index {k} out of range")));
    }
    if !(h_rel > 0.0 && h_rel < 1.0) {
        return Err(OracleError::Invalid(format!("h_rel must lie in (0, 1), got {h_rel}")));
    }
    let h = h_rel * c[k];
    let mean_at = |ck: f64| -> Result<f64, OracleError> {
        let mut cc = c.to_vec();
        cc[k] = ck;
        let fsp = Fsp::new(net, &cc, trunc.clone())?;
        let sol = fsp.stationary()?;
        let fv = fsp.tabulate(f)?;
        Ok(sol.expect(|i| fv[i]))
    };
    let (plus, minus) = rayon::join(|| mean_at(c[k] + h), || mean_at(c[k] - h));
    Ok((plus? - minus?) / (2.0 * h))
}

pub fn asymptotic_covariance(
    net: &ReactionNetwork,
    c: &[f64],
    trunc: &Truncation,
    f: &Observable,
    k: usize,
) -> Result<AsymptoticCovariance, OracleError> {
    let fsp = Fsp::new(net, c, trunc.clone())?;
    let sol = fsp.solve(f)?;
    fsp.covariance(&sol, k)
}

/// Steady state of `dm/dt = Σ_j ν_j a_j(m)` for affine intensities, with the
/// conservation laws `⟨w, m⟩ = ⟨w, x₀⟩` appended, and its parameter gradient
/// by implicit differentiation.
pub fn linear_moment_sensitivity(
    net: &ReactionNetwork,
    c: &[f64],
    x0: &State,
    f: &Observable,
) -> Result<LinearMoments, OracleError> {
    net.check_params(c)?;
    net.check_state(x0)?;
    let n = net.n_species();
    let p = net.n_parameters();
    let w_obs = f
        .linear_coefficients(n)
        .ok_or(OracleError::NonLinearObservable)?;
    if w_obs.len() != n {
        return Err(OracleError::Invalid("observable length mismatch".into()));
    }

    // drift = J(c) m + s(c); both linear in c for mass action
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut src = DVector::<f64>::zeros(n);
    let mut d_jac = vec![DMatrix::<f64>::zeros(n, n); p];
    let mut d_src = vec![DVector::<f64>::zeros(n); p];
    for (j, r) in net.reactions().iter().enumerate() {
        let RateLaw::MassAction { param } = r.rate_law else {
            return Err(OracleError::NonAffine(j));
        };
        let order: u32 = r.reactants.iter().sum();
        match order {
            0 => {
                for i in 0..n {
                    src[i] += r.net[i] as f64 * c[param];
                    d_src[param][i] += r.net[i] as f64;
                }
            }
            1 => {
                let s = r.reactants.iter().position(|&v| v == 1).expect("order one");
                for i in 0..n {
                    jac[(i, s)] += r.net[i] as f64 * c[param];
                    d_jac[param][(i, s)] += r.net[i] as f64;
                }
            }
            _ => return Err(OracleError::NonAffine(j)),
        }
    }

    let cons = conservation_laws(net);
    let q = cons.ncols();
    let mut b = DMatrix::<f64>::zeros(n + q, n);
    b.view_mut((0, 0), (n, n)).copy_from(&jac);
    let mut rhs = DVector::<f64>::zeros(n + q);
    rhs.rows_mut(0, n).copy_from(&(-&src));
    let x0v = DVector::from_iterator(n, x0.iter().map(|&v| f64::from(v)));
    for l in 0..q {
        let w = cons.column(l);
        for i in 0..n {
            b[(n + l, i)] = w[i];
        }
        rhs[n + l] = w.dot(&x0v);
    }

    let svd = b.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(OracleError::Singular("moment equations after conservation reduction".into()));
    }
    let m = svd
        .solve(&rhs, 0.0)
        .map_err(|e| OracleError::Singular(e.to_string()))?;
    if (&b * &m - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
        return Err(OracleError::Singular("inconsistent moment equations".into()));
    }

    let w = DVector::from_vec(w_obs);
    let mut gradient = Vec::with_capacity(p);
    for k in 0..p {
        let mut g = DVector::<f64>::zeros(n + q);
        g.rows_mut(0, n).copy_from(&(-(&d_jac[k] * &m + &d_src[k])));
        let dm = svd
            .solve(&g, 0.0)
            .map_err(|e| OracleError::Singular(e.to_string()))?;
        gradient.push(w.dot(&dm));
    }
    Ok(LinearMoments {
        value: w.dot(&m),
        means: m.iter().copied().collect(),
        gradient,
    })
}

/// Orthonormal basis (as columns) of `{w : wᵀ ν_j = 0 ∀j}`.
fn conservation_laws(net: &ReactionNetwork) -> DMatrix<f64> {
    let n = net.n_species();
    let m = net.n_reactions();
    let s = DMatrix::from_fn(n, m, |i, j| net.reactions()[j].net[i] as f64);
    let eig = SymmetricEigen::new(&s * s.transpose());
    let lmax = eig.eigenvalues.amax().max(1.0);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * lmax)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}
