// SPDX-License-Identifier: Apache-2.0
use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{OracleError, ENUMERATION_LIMIT};
use crate::network::{ReactionNetwork, State};

/// How to build a truncation for a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruncationSpec {
    /// Every state on `Σ w_i x_i = total`.
    Conservation { weights: Vec<u32>, total: u32 },
    /// States reachable from the initial state inside `x_i ≤ max_i`.
    Box { max: Vec<u32> },
}

impl TruncationSpec {
    pub fn build(
        &self,
        net: &ReactionNetwork,
        c: &[f64],
        initial: &State,
    ) -> Result<Truncation, OracleError> {
        match self {
            TruncationSpec::Conservation { weights, total } => {
                if weights.len() != net.n_species() {
                    return Err(OracleError::Invalid(format!(
                        "conservation weights have length {}, expected {}",
                        weights.len(),
                        net.n_species()
                    )));
                }
                Truncation::conservation_surface(weights, *total)
            }
            TruncationSpec::Box { max } => Truncation::reachable_box(net, c, initial, max),
        }
    }
}

/// An ordered finite set of states with its inverse index.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    states: Vec<State>,
    index: HashMap<State, usize>,
}

impl Truncation {
    /// Sorts and deduplicates the given states.
    pub fn from_states(mut states: Vec<State>) -> Result<Self, OracleError> {
        if states.is_empty() {
            return Err(OracleError::EmptyTruncation);
        }
        states.sort();
        states.dedup();
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Self { states, index })
    }

    /// All non-negative integer vectors with `Σ w_i x_i = total`, `w_i > 0`.
    pub fn conservation_surface(weights: &[u32], total: u32) -> Result<Self, OracleError> {
        if weights.is_empty() || weights.contains(&0) {
            return Err(OracleError::Invalid(
                "conservation weights must all be positive".into(),
            ));
        }
        let mut out = Vec::new();
        let mut current = vec![0u32; weights.len()];
        fn rec(
            i: usize,
            remaining: u32,
            weights: &[u32],
            current: &mut Vec<u32>,
            out: &mut Vec<State>,
        ) -> Result<(), OracleError> {
            if i + 1 == weights.len() {
                if remaining.is_multiple_of(weights[i]) {
                    current[i] = remaining / weights[i];
                    out.push(State::new(current.clone()));
                    if out.len() > ENUMERATION_LIMIT {
                        return Err(OracleError::TooManyStates(out.len()));
                    }
                }
                return Ok(());
            }
            for xi in 0..=remaining / weights[i] {
                current[i] = xi;
                rec(i + 1, remaining - xi * weights[i], weights, current, out)?;
            }
            Ok(())
        }
        rec(0, total, weights, &mut current, &mut out)?;
        Self::from_states(out)
    }

    /// Breadth-first reachability from `initial` through transitions with
    /// positive intensity, restricted to `x ≤ max` componentwise.
    pub fn reachable_box(
        net: &ReactionNetwork,
        c: &[f64],
        initial: &State,
        max: &[u32],
    ) -> Result<Self, OracleError> {
        net.check_state(initial)?;
        net.check_params(c)?;
        if max.len() != net.n_species() {
            return Err(OracleError::Invalid(format!(
                "box bounds have length {}, expected {}",
                max.len(),
                net.n_species()
            )));
        }
        let inside = |s: &State| s.iter().zip(max).all(|(x, m)| x <= m);
        if !inside(initial) {
            return Err(OracleError::InitialOutside(initial.to_string()));
        }
        let mut seen: HashMap<State, ()> = HashMap::new();
        let mut queue = VecDeque::new();
        seen.insert(initial.clone(), ());
        queue.push_back(initial.clone());
        while let Some(x) = queue.pop_front() {
            for r in net.reactions() {
                if r.rate(&x, c) <= 0.0 {
                    continue;
                }
                if let Some(y) = x.shifted(&r.net) {
                    if inside(&y) && !seen.contains_key(&y) {
                        seen.insert(y.clone(), ());
                        queue.push_back(y);
                        if seen.len() > ENUMERATION_LIMIT {
                            return Err(OracleError::TooManyStates(seen.len()));
                        }
                    }
                }
            }
        }
        Self::from_states(seen.into_keys().collect())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &State {
        &self.states[i]
    }

    pub fn index_of(&self, x: &State) -> Option<usize> {
        self.index.get(x).copied()
    }
}
