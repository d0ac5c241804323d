// SPDX-License-Identifier: Apache-2.0
//! Reaction networks, rate laws, states and observables.
//!
//! A network with `n` species and `m` reactions defines a continuous-time
//! Markov chain on `ℕⁿ`: from state `x`, reaction `j` fires at rate
//! `a_j(x, c)` and moves the chain to `x + ν_j`. Everything here is a pure
//! function of its arguments.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network must contain ≥1 reaction")]
    NoReactions,
    #[error("network must contain ≥1 species")]
    NoSpecies,
    #[error("reaction {reaction}: stoichiometry has length {got}, expected {expected}")]
    StoichiometryLength {
        reaction: usize,
        got: usize,
        expected: usize,
    },
    #[error("reaction {reaction}: rate law references parameter index {index} but only {count} parameters exist")]
    UnknownParameter {
        reaction: usize,
        index: usize,
        count: usize,
    },
    #[error("reaction {reaction}: rate law references species index {index} but only {count} species exist")]
    UnknownSpecies {
        reaction: usize,
        index: usize,
        count: usize,
    },
    #[error("reaction index {0} out of range")]
    ReactionOutOfRange(usize),
    #[error("parameter index {0} out of range")]
    ParameterOutOfRange(usize),
    #[error("parameter vector has length {got}, expected {expected}")]
    ParameterLength { got: usize, expected: usize },
    #[error("state has length {got}, expected {expected}")]
    StateLength { got: usize, expected: usize },
    #[error("reaction {reaction} is infeasible from state {state}")]
    InfeasibleIncrement { reaction: usize, state: State },
    #[error("observable is not defined at state {0}")]
    ObservableUndefined(State),
    #[error("observable has {got} coefficients, expected {expected}")]
    ObservableLength { got: usize, expected: usize },
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
}

/// Molecule counts, one entry per species.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub Vec<u32>);

impl State {
    pub fn new(counts: Vec<u32>) -> Self {
        Self(counts)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    /// `self + delta`, or `None` if any entry would become negative.
    pub fn shifted(&self, delta: &[i64]) -> Option<State> {
        let mut out = Vec::with_capacity(self.0.len());
        for (&x, &d) in self.0.iter().zip(delta) {
            let y = i64::from(x) + d;
            if y < 0 || y > i64::from(u32::MAX) {
                return None;
            }
            out.push(y as u32);
        }
        Some(State(out))
    }
}

impl Deref for State {
    type Target = [u32];
    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Kinetic law of a single reaction.
///
/// Every law is multiplied by the reactant-feasibility indicator, so an
/// intensity is zero whenever some `x_i < ν⁻_ij`. That makes `a_j > 0` imply
/// that `x + ν_j` is a valid state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum RateLaw {
    /// `a = c_k · ∏_i x_i!/(x_i − ν⁻_i)!` (falling factorials over reactants).
    MassAction { param: usize },
    /// `a = x_s^n / (c_k + x_s^n)`.
    Hill {
        param: usize,
        exponent: u32,
        species: usize,
    },
    /// `a = c_rate · θ^n / (θ^n + x_s^n)` with `θ = c_threshold`.
    Repression {
        rate: usize,
        threshold: usize,
        exponent: u32,
        species: usize,
    },
}

impl RateLaw {
    /// Parameter indices this law depends on (deduplicated, in order).
    pub fn parameters(&self) -> Vec<usize> {
        match *self {
            RateLaw::MassAction { param } | RateLaw::Hill { param, .. } => vec![param],
            RateLaw::Repression {
                rate, threshold, ..
            } => {
                if rate == threshold {
                    vec![rate]
                } else {
                    vec![rate, threshold]
                }
            }
        }
    }

    pub fn is_mass_action(&self) -> bool {
        matches!(self, RateLaw::MassAction { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub reactants: Vec<u32>,
    pub products: Vec<u32>,
    pub net: Vec<i64>,
    pub rate_law: RateLaw,
}

impl Reaction {
    pub fn new(reactants: Vec<u32>, products: Vec<u32>, rate_law: RateLaw) -> Self {
        let net = products
            .iter()
            .zip(&reactants)
            .map(|(&p, &r)| i64::from(p) - i64::from(r))
            .collect();
        Self {
            reactants,
            products,
            net,
            rate_law,
        }
    }

    /// `∏_i x_i (x_i − 1) ⋯ (x_i − ν⁻_i + 1)`; zero if any count is short.
    pub fn combinatorial_factor(&self, x: &[u32]) -> f64 {
        let mut b = 1.0;
        for (&xi, &ri) in x.iter().zip(&self.reactants) {
            if xi < ri {
                return 0.0;
            }
            for k in 0..ri {
                b *= f64::from(xi - k);
            }
        }
        b
    }

    fn feasible(&self, x: &[u32]) -> bool {
        x.iter().zip(&self.reactants).all(|(&xi, &ri)| xi >= ri)
    }

    /// Intensity at `x` under parameters `c`. Does not validate indices.
    #[inline]
    pub fn rate(&self, x: &[u32], c: &[f64]) -> f64 {
        match self.rate_law {
            RateLaw::MassAction { param } => c[param] * self.combinatorial_factor(x),
            RateLaw::Hill {
                param,
                exponent,
                species,
            } => {
                if !self.feasible(x) {
                    return 0.0;
                }
                let xn = f64::from(x[species]).powi(exponent as i32);
                let denom = c[param] + xn;
                if xn == 0.0 {
                    0.0
                } else {
                    xn / denom
                }
            }
            RateLaw::Repression {
                rate,
                threshold,
                exponent,
                species,
            } => {
                if !self.feasible(x) {
                    return 0.0;
                }
                let tn = c[threshold].powi(exponent as i32);
                let xn = f64::from(x[species]).powi(exponent as i32);
                c[rate] * tn / (tn + xn)
            }
        }
    }

    /// `∂a/∂c_k` at `x`. Does not validate indices.
    #[inline]
    pub fn rate_derivative(&self, x: &[u32], c: &[f64], k: usize) -> f64 {
        match self.rate_law {
            RateLaw::MassAction { param } => {
                if k == param {
                    self.combinatorial_factor(x)
                } else {
                    0.0
                }
            }
            RateLaw::Hill {
                param,
                exponent,
                species,
            } => {
                if k != param || !self.feasible(x) {
                    return 0.0;
                }
                let xn = f64::from(x[species]).powi(exponent as i32);
                let denom = c[param] + xn;
                if xn == 0.0 {
                    0.0
                } else {
                    -xn / (denom * denom)
                }
            }
            RateLaw::Repression {
                rate,
                threshold,
                exponent,
                species,
            } => {
                if !self.feasible(x) {
                    return 0.0;
                }
                let n = exponent as i32;
                let theta = c[threshold];
                let tn = theta.powi(n);
                let xn = f64::from(x[species]).powi(n);
                let denom = tn + xn;
                let mut d = 0.0;
                if k == rate {
                    d += tn / denom;
                }
                if k == threshold && n > 0 {
                    d += c[rate] * f64::from(exponent) * theta.powi(n - 1) * xn / (denom * denom);
                }
                d
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionNetwork {
    species: Vec<String>,
    parameters: Vec<String>,
    reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    pub fn new(
        species: Vec<String>,
        parameters: Vec<String>,
        reactions: Vec<Reaction>,
    ) -> Result<Self, NetworkError> {
        if species.is_empty() {
            return Err(NetworkError::NoSpecies);
        }
        if reactions.is_empty() {
            return Err(NetworkError::NoReactions);
        }
        check_unique(&species)?;
        check_unique(&parameters)?;
        let n = species.len();
        for (j, r) in reactions.iter().enumerate() {
            for len in [r.reactants.len(), r.products.len(), r.net.len()] {
                if len != n {
                    return Err(NetworkError::StoichiometryLength {
                        reaction: j,
                        got: len,
                        expected: n,
                    });
                }
            }
            for p in r.rate_law.parameters() {
                if p >= parameters.len() {
                    return Err(NetworkError::UnknownParameter {
                        reaction: j,
                        index: p,
                        count: parameters.len(),
                    });
                }
            }
            if let RateLaw::Hill { species: s, .. } | RateLaw::Repression { species: s, .. } =
                r.rate_law
            {
                if s >= n {
                    return Err(NetworkError::UnknownSpecies {
                        reaction: j,
                        index: s,
                        count: n,
                    });
                }
            }
        }
        Ok(Self {
            species,
            parameters,
            reactions,
        })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn parameters(&self) -> &[String] {
        &self.parameters
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn n_parameters(&self) -> usize {
        self.parameters.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|s| s == name)
    }

    /// Reactions whose intensity depends on parameter `k`.
    pub fn reactions_using(&self, k: usize) -> Vec<usize> {
        self.reactions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.rate_law.parameters().contains(&k))
            .map(|(j, _)| j)
            .collect()
    }

    pub fn check_state(&self, x: &[u32]) -> Result<(), NetworkError> {
        if x.len() != self.n_species() {
            return Err(NetworkError::StateLength {
                got: x.len(),
                expected: self.n_species(),
            });
        }
        Ok(())
    }

    pub fn check_params(&self, c: &[f64]) -> Result<(), NetworkError> {
        if c.len() != self.n_parameters() {
            return Err(NetworkError::ParameterLength {
                got: c.len(),
                expected: self.n_parameters(),
            });
        }
        Ok(())
    }

    fn reaction(&self, j: usize) -> Result<&Reaction, NetworkError> {
        self.reactions
            .get(j)
            .ok_or(NetworkError::ReactionOutOfRange(j))
    }
}

fn check_unique(names: &[String]) -> Result<(), NetworkError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(NetworkError::DuplicateName(n.clone()));
        }
    }
    Ok(())
}

/// `a_j(x, c)`.
pub fn intensity(
    net: &ReactionNetwork,
    j: usize,
    x: &State,
    c: &[f64],
) -> Result<f64, NetworkError> {
    let r = net.reaction(j)?;
    net.check_state(x)?;
    net.check_params(c)?;
    Ok(r.rate(x, c))
}

/// `∂a_j/∂c_k (x, c)`.
pub fn intensity_param_derivative(
    net: &ReactionNetwork,
    j: usize,
    x: &State,
    c: &[f64],
    k: usize,
) -> Result<f64, NetworkError> {
    let r = net.reaction(j)?;
    if k >= net.n_parameters() {
        return Err(NetworkError::ParameterOutOfRange(k));
    }
    net.check_state(x)?;
    net.check_params(c)?;
    Ok(r.rate_derivative(x, c, k))
}

/// A real-valued function on the state space.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    SpeciesCount(usize),
    LinearCombination(Vec<f64>),
    Indicator(HashSet<State>),
    /// Tabulated values; evaluation outside the table is an error.
    Custom(HashMap<State, f64>),
}

impl Observable {
    pub fn indicator<I: IntoIterator<Item = State>>(states: I) -> Self {
        Observable::Indicator(states.into_iter().collect())
    }

    pub fn check(&self, net: &ReactionNetwork) -> Result<(), NetworkError> {
        match self {
            Observable::SpeciesCount(i) if *i >= net.n_species() => {
                Err(NetworkError::UnknownSpecies {
                    reaction: usize::MAX,
                    index: *i,
                    count: net.n_species(),
                })
            }
            Observable::LinearCombination(w) if w.len() != net.n_species() => {
                Err(NetworkError::ObservableLength {
                    got: w.len(),
                    expected: net.n_species(),
                })
            }
            _ => Ok(()),
        }
    }

    /// `f(x)`.
    #[inline]
    pub fn eval(&self, x: &[u32]) -> Result<f64, NetworkError> {
        match self {
            Observable::SpeciesCount(i) => Ok(f64::from(x[*i])),
            Observable::LinearCombination(w) => {
                Ok(w.iter().zip(x).map(|(wi, &xi)| wi * f64::from(xi)).sum())
            }
            Observable::Indicator(set) => {
                // allocation-free lookup is not possible with a Vec key; fine for oracle-sized sets
                Ok(if set.contains(&State(x.to_vec())) {
                    1.0
                } else {
                    0.0
                })
            }
            Observable::Custom(table) => table
                .get(&State(x.to_vec()))
                .copied()
                .ok_or_else(|| NetworkError::ObservableUndefined(State(x.to_vec()))),
        }
    }

    /// Coefficients when `f` is linear in the state.
    pub fn linear_coefficients(&self, n_species: usize) -> Option<Vec<f64>> {
        match self {
            Observable::SpeciesCount(i) => {
                let mut w = vec![0.0; n_species];
                w[*i] = 1.0;
                Some(w)
            }
            Observable::LinearCombination(w) => Some(w.clone()),
            _ => None,
        }
    }
}

/// `Δ_j f(x) = f(x + ν_j) − f(x)`.
pub fn increment(
    f: &Observable,
    x: &State,
    j: usize,
    net: &ReactionNetwork,
) -> Result<f64, NetworkError> {
    let r = net.reaction(j)?;
    net.check_state(x)?;
    let y = x
        .shifted(&r.net)
        .ok_or_else(|| NetworkError::InfeasibleIncrement {
            reaction: j,
            state: x.clone(),
        })?;
    Ok(f.eval(&y)? - f.eval(x)?)
}

/// `(L_c f)(x) = Σ_j a_j(x, c) Δ_j f(x)` over reactions with `a_j(x, c) > 0`.
pub fn apply_generator(
    net: &ReactionNetwork,
    f: &Observable,
    x: &State,
    c: &[f64],
) -> Result<f64, NetworkError> {
    net.check_state(x)?;
    net.check_params(c)?;
    let mut sum = 0.0;
    for (j, r) in net.reactions().iter().enumerate() {
        let a = r.rate(x, c);
        if a > 0.0 {
            sum += a * increment(f, x, j, net)?;
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn linear_net() -> ReactionNetwork {
        let ma = |p| RateLaw::MassAction { param: p };
        ReactionNetwork::new(
            vec!["S1".into(), "S2".into(), "S3".into()],
            vec!["c1".into(), "c2".into(), "c3".into(), "c4".into()],
            vec![
                Reaction::new(vec![1, 0, 0], vec![0, 1, 0], ma(0)),
                Reaction::new(vec![0, 1, 0], vec![1, 0, 0], ma(1)),
                Reaction::new(vec![0, 1, 0], vec![0, 0, 1], ma(2)),
                Reaction::new(vec![0, 0, 1], vec![0, 1, 0], ma(3)),
            ],
        )
        .unwrap()
    }

    const C: [f64; 4] = [10.0, 20.0, 0.03, 0.02];

    #[test]
    fn linear_intensities() {
        let net = linear_net();
        let x = State::new(vec![5, 5, 0]);
        assert_eq!(intensity(&net, 0, &x, &C).unwrap(), 50.0);
        assert_eq!(net.reactions()[0].net, vec![-1, 1, 0]);
        assert_eq!(intensity_param_derivative(&net, 0, &x, &C, 0).unwrap(), 5.0);
        assert_eq!(intensity_param_derivative(&net, 0, &x, &C, 1).unwrap(), 0.0);
        assert_eq!(intensity(&net, 3, &x, &C).unwrap(), 0.0);
        assert!(intensity(&net, 4, &x, &C).is_err());
    }

    #[test]
    fn bimolecular_uses_falling_factorial() {
        let net = ReactionNetwork::new(
            vec!["pA".into(), "pA2".into()],
            vec!["k1".into()],
            vec![Reaction::new(
                vec![2, 0],
                vec![0, 1],
                RateLaw::MassAction { param: 0 },
            )],
        )
        .unwrap();
        let a = intensity(&net, 0, &State::new(vec![3, 0]), &[0.02]).unwrap();
        assert!((a - 0.12).abs() < 1e-15);
        assert_eq!(intensity(&net, 0, &State::new(vec![1, 0]), &[0.02]).unwrap(), 0.0);
    }

    #[test]
    fn hill_derivative() {
        let net = ReactionNetwork::new(
            vec!["X".into()],
            vec!["c".into()],
            vec![Reaction::new(
                vec![0],
                vec![1],
                RateLaw::Hill {
                    param: 0,
                    exponent: 4,
                    species: 0,
                },
            )],
        )
        .unwrap();
        let x = State::new(vec![2]);
        let d = intensity_param_derivative(&net, 0, &x, &[16.0], 0).unwrap();
        assert_eq!(d, -0.015625);
        let h = 1e-6;
        let fd = (intensity(&net, 0, &x, &[16.0 + h]).unwrap()
            - intensity(&net, 0, &x, &[16.0 - h]).unwrap())
            / (2.0 * h);
        assert!(((fd - d) / d).abs() < 1e-6);
    }

    #[test]
    fn increments_and_generator() {
        let net = linear_net();
        let x1 = Observable::SpeciesCount(0);
        let x = State::new(vec![5, 5, 0]);
        assert_eq!(increment(&x1, &x, 0, &net).unwrap(), -1.0);
        assert_eq!(apply_generator(&net, &x1, &x, &C).unwrap(), 50.0);
        let constant = Observable::LinearCombination(vec![0.0; 3]);
        assert_eq!(apply_generator(&net, &constant, &x, &C).unwrap(), 0.0);
        // S3 is empty: reaction 4 cannot fire
        assert!(matches!(
            increment(&x1, &x, 3, &net),
            Err(NetworkError::InfeasibleIncrement { .. })
        ));
    }

    #[test]
    fn isomerization_product_observable() {
        let ma = |p| RateLaw::MassAction { param: p };
        let net = ReactionNetwork::new(
            vec!["A".into(), "B".into()],
            vec!["c1".into(), "c2".into()],
            vec![
                Reaction::new(vec![1, 0], vec![0, 1], ma(0)),
                Reaction::new(vec![0, 1], vec![1, 0], ma(1)),
            ],
        )
        .unwrap();
        let a = State::new(vec![1, 0]);
        let b = State::new(vec![0, 1]);
        let product = Observable::Custom([(a.clone(), 0.0), (b.clone(), 0.0)].into());
        assert_eq!(increment(&product, &a, 0, &net).unwrap(), 0.0);
        let f = Observable::SpeciesCount(0);
        assert_eq!(apply_generator(&net, &f, &a, &[1.0, 1.0]).unwrap(), -1.0);
        let outside = State::new(vec![2, 0]);
        assert!(product.eval(&outside).is_err());
    }

    #[test]
    fn validation_errors() {
        assert_eq!(
            ReactionNetwork::new(vec!["A".into()], vec![], vec![]),
            Err(NetworkError::NoReactions)
        );
        let bad = ReactionNetwork::new(
            vec!["A".into()],
            vec!["c".into()],
            vec![Reaction::new(vec![1], vec![0], RateLaw::MassAction { param: 3 })],
        );
        assert!(matches!(bad, Err(NetworkError::UnknownParameter { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rate_law() -> impl Strategy<Value = RateLaw> {
            prop_oneof![
                (0usize..3).prop_map(|param| RateLaw::MassAction { param }),
                (0usize..3, 1u32..5, 0usize..2).prop_map(|(param, exponent, species)| {
                    RateLaw::Hill {
                        param,
                        exponent,
                        species,
                    }
                }),
                (0usize..3, 0usize..3, 1u32..5, 0usize..2).prop_map(
                    |(rate, threshold, exponent, species)| RateLaw::Repression {
                        rate,
                        threshold,
                        exponent,
                        species,
                    }
                ),
            ]
        }

        proptest! {
            #[test]
            fn derivative_matches_central_difference(
                law in rate_law(),
                reactants in proptest::collection::vec(0u32..3, 2),
                x in proptest::collection::vec(0u32..20, 2),
                c in proptest::collection::vec(0.5f64..5.0, 3),
                k in 0usize..3,
            ) {
                let r = Reaction::new(reactants, vec![0, 0], law);
                let a = r.rate(&x, &c);
                prop_assert!(a >= 0.0);
                let d = r.rate_derivative(&x, &c, k);
                let h = 1e-6 * c[k];
                let mut cp = c.clone();
                cp[k] += h;
                let mut cm = c.clone();
                cm[k] -= h;
                let fd = (r.rate(&x, &cp) - r.rate(&x, &cm)) / (2.0 * h);
                // truncation error O(h²) plus cancellation error O(ε a / h)
                let tol = 1e-6 * d.abs() + 1e2 * f64::EPSILON * (1.0 + a) / h;
                prop_assert!((fd - d).abs() <= tol, "fd {} vs {}", fd, d);
            }

            #[test]
            fn mass_action_is_homogeneous_in_its_parameter(
                reactants in proptest::collection::vec(0u32..3, 2),
                x in proptest::collection::vec(0u32..20, 2),
                c in proptest::collection::vec(0.1f64..5.0, 2),
                lambda in 0.1f64..10.0,
            ) {
                let r = Reaction::new(reactants, vec![0, 0], RateLaw::MassAction { param: 1 });
                let mut scaled = c.clone();
                scaled[1] *= lambda;
                let lhs = r.rate(&x, &scaled);
                let rhs = lambda * r.rate(&x, &c);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            }

            #[test]
            fn generator_annihilates_constants(x in proptest::collection::vec(0u32..15, 3)) {
                let net = linear_net();
                let zero = Observable::LinearCombination(vec![0.0; 3]);
                let v = apply_generator(&net, &zero, &State::new(x), &C).unwrap();
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
