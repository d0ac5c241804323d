// SPDX-License-Identifier: Apache-2.0
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::checks::irreducibility_of;
use super::{build_generator, IrreducibilityReport, OracleError, SparseGenerator, Truncation};
use super::DENSE_LIMIT;
use crate::network::{Observable, ReactionNetwork};
use crate::ssa::Compensated;

/// Max-norm diagnostics of the linear solves.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Residuals {
    /// `‖πᵀL‖∞`.
    pub stationary: f64,
    /// `|Σπ − 1|`.
    pub normalization: f64,
    /// `‖−L f̂ − (f − π(f))‖∞`, once the Poisson equation is solved.
    pub poisson: Option<f64>,
    /// `|Σ π f̂|`.
    pub centering: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FspSolution {
    pub truncation: Truncation,
    pub pi: Vec<f64>,
    /// `f` tabulated on the truncation; empty until a Poisson solve.
    pub f_values: Vec<f64>,
    /// `π(f)`; NaN until a Poisson solve.
    pub pi_f: f64,
    pub f_hat: Option<Vec<f64>>,
    /// `Σ_x π(x) · leak(x)`.
    pub mass_leak_rate: f64,
    pub residuals: Residuals,
}

impl FspSolution {
    /// `Σ_x π(x) g(x)` with compensated summation.
    pub fn expect(&self, g: impl Fn(usize) -> f64) -> f64 {
        let mut s = Compensated::default();
        for (i, &p) in self.pi.iter().enumerate() {
            s.add(p * g(i));
        }
        s.value()
    }

    pub fn f_hat(&self) -> Result<&[f64], OracleError> {
        self.f_hat.as_deref().ok_or(OracleError::MissingPoisson)
    }
}

/// A truncated chain with its generator, reused across solves.
#[derive(Debug, Clone)]
pub struct Fsp<'a> {
    pub net: &'a ReactionNetwork,
    pub c: Vec<f64>,
    pub truncation: Truncation,
    pub generator: SparseGenerator,
}

impl<'a> Fsp<'a> {
    pub fn new(
        net: &'a ReactionNetwork,
        c: &[f64],
        truncation: Truncation,
    ) -> Result<Self, OracleError> {
        let generator = build_generator(net, c, &truncation)?;
        Ok(Self {
            net,
            c: c.to_vec(),
            truncation,
            generator,
        })
    }

    pub fn irreducibility(&self) -> IrreducibilityReport {
        irreducibility_of(&self.generator, &self.truncation)
    }

    pub fn tabulate(&self, f: &Observable) -> Result<Vec<f64>, OracleError> {
        f.check(self.net)?;
        self.truncation
            .states()
            .iter()
            .map(|x| f.eval(x).map_err(OracleError::from))
            .collect()
    }

    pub fn stationary(&self) -> Result<FspSolution, OracleError> {
        let n = self.truncation.len();
        if n > DENSE_LIMIT {
            return Err(OracleError::TooLargeForDense(n));
        }
        let irr = self.irreducibility();
        if !irr.irreducible {
            return Err(OracleError::Reducible {
                components: irr.components.len(),
            });
        }
        // Lᵀ π = 0 with the last equation replaced by Σπ = 1
        let mut a = self.generator.to_dense().transpose();
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let mut pi = solve_refined(&a, &b, "stationary equations")?;
        for p in pi.iter_mut() {
            *p = p.max(0.0);
        }
        let mut total = Compensated::default();
        pi.iter().for_each(|&p| total.add(p));
        let total = total.value();
        pi.iter_mut().for_each(|p| *p /= total);
        let pi: Vec<f64> = pi.iter().copied().collect();

        let flux = self.generator.apply_transpose(&pi);
        let mut norm = Compensated::default();
        pi.iter().for_each(|&p| norm.add(p));
        let mut leak = Compensated::default();
        for (p, l) in pi.iter().zip(self.generator.leaks()) {
            leak.add(p * l);
        }
        Ok(FspSolution {
            truncation: self.truncation.clone(),
            pi,
            f_values: Vec::new(),
            pi_f: f64::NAN,
            f_hat: None,
            mass_leak_rate: leak.value(),
            residuals: Residuals {
                stationary: max_abs(&flux),
                normalization: (norm.value() - 1.0).abs(),
                poisson: None,
                centering: None,
            },
        })
    }

    /// Fills `f_hat` by solving `−L f̂ = f − π(f)`, `Σ π f̂ = 0`.
    pub fn poisson(&self, sol: &mut FspSolution, f: &Observable) -> Result<(), OracleError> {
        let n = self.truncation.len();
        let fv = self.tabulate(f)?;
        let pi_f = sol.expect(|i| fv[i]);
        // unknowns (f̂, λ): −L f̂ + λ𝟙 = f − π(f), πᵀ f̂ = 0; λ = 0 at the solution
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&(-self.generator.to_dense()));
        for i in 0..n {
            m[(i, n)] = 1.0;
            m[(n, i)] = sol.pi[i];
        }
        let mut rhs = DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = fv[i] - pi_f;
        }
        let z = solve_refined(&m, &rhs, "augmented Poisson system")?;
        let mut f_hat: Vec<f64> = z.iter().take(n).copied().collect();
        // remove the residual π-component left by rounding
        let shift = sol.expect(|i| f_hat[i]);
        f_hat.iter_mut().for_each(|v| *v -= shift);

        let lf = self.generator.apply(&f_hat);
        let res = (0..n)
            .map(|i| (-lf[i] - (fv[i] - pi_f)).abs())
            .fold(0.0, f64::max);
        sol.residuals.poisson = Some(res);
        sol.residuals.centering = Some(sol.expect(|i| f_hat[i]).abs());
        sol.f_values = fv;
        sol.pi_f = pi_f;
        sol.f_hat = Some(f_hat);
        Ok(())
    }

    pub fn solve(&self, f: &Observable) -> Result<FspSolution, OracleError> {
        let mut sol = self.stationary()?;
        self.poisson(&mut sol, f)?;
        Ok(sol)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// LU solve followed by one step of iterative refinement.
fn solve_refined(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    what: &str,
) -> Result<DVector<f64>, OracleError> {
    let lu = a.clone().lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| OracleError::Singular(what.to_string()))?;
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::Singular(what.to_string()));
    }
    Ok(x)
}

pub fn stationary_distribution(
    net: &ReactionNetwork,
    c: &[f64],
    trunc: &Truncation,
) -> Result<FspSolution, OracleError> {
    Fsp::new(net, c, trunc.clone())?.stationary()
}

pub fn solve_poisson(
    net: &ReactionNetwork,
    c: &[f64],
    trunc: &Truncation,
    f: &Observable,
) -> Result<FspSolution, OracleError> {
    Fsp::new(net, c, trunc.clone())?.solve(f)
}
