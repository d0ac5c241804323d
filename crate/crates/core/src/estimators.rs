// SPDX-License-Identifier: Apache-2.0
//! The four likelihood-ratio steady-state sensitivity estimators.
//!
//! | name     | value at time `t`                      |
//! |----------|----------------------------------------|
//! | `lr`     | `(∫f /t) · Z(t)`                       |
//! | `clr`    | `((∫f − π(f) t)/t) · Z(t)`             |
//! | `intlr`  | `∫ f Z ds / t`                         |
//! | `intclr` | `∫ (f − π(f)) Z ds / t`                |
//!
//! Each is an [`Estimator`] trait object; an [`EstimatorRegistry`] maps
//! names to implementations so callers can choose them at runtime.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ssa::SensitivityAccumulators;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("unknown estimator `{0}` (known: {1})")]
    Unknown(String, String),
    #[error("estimator `{0}` registered twice")]
    Duplicate(String),
    #[error("empty estimator selection")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "CLR")]
    Clr,
    #[serde(rename = "intLR")]
    IntLr,
    #[serde(rename = "intCLR")]
    IntClr,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Lr,
        EstimatorKind::Clr,
        EstimatorKind::IntLr,
        EstimatorKind::IntClr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Lr => "LR",
            EstimatorKind::Clr => "CLR",
            EstimatorKind::IntLr => "intLR",
            EstimatorKind::IntClr => "intCLR",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EstimatorKind {
    type Err = EstimatorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstimatorRegistry::with_defaults()
            .get(s)
            .map(|e| e.kind())
    }
}

/// The path functionals one estimator needs for a single
/// (observable, parameter) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathView {
    pub int_obs: f64,
    pub weight: f64,
    pub int_obs_weight: f64,
    pub int_weight: f64,
    /// `(centering constant, ∫(f − constant) Z ds)` when centered online.
    pub online_centered: Option<(f64, f64)>,
}

impl PathView {
    pub fn from_accumulators(acc: &SensitivityAccumulators, observable: usize, param: usize) -> Self {
        let k = acc.n_params();
        let idx = observable * k + param;
        Self {
            int_obs: acc.int_obs[observable],
            weight: acc.weight[param],
            int_obs_weight: acc.int_obs_weight[idx],
            int_weight: acc.int_weight[param],
            online_centered: match (&acc.centering, &acc.int_centered_obs_weight) {
                (Some(c), Some(v)) => Some((c[observable], v[idx])),
                _ => None,
            },
        }
    }
}

pub fn lr_estimate(v: &PathView, t: f64) -> f64 {
    v.int_obs / t * v.weight
}

pub fn clr_estimate(v: &PathView, t: f64, pi_f: f64) -> f64 {
    (v.int_obs - pi_f * t) / t * v.weight
}

pub fn int_lr_estimate(v: &PathView, t: f64) -> f64 {
    v.int_obs_weight / t
}

/// Uses the online-centered integral when it was accumulated with exactly
/// `pi_f`; otherwise reconstructs `(∫fZ − π(f)∫Z)/t`.
pub fn int_clr_estimate(v: &PathView, t: f64, pi_f: f64) -> f64 {
    match v.online_centered {
        Some((c, integral)) if c == pi_f => integral / t,
        _ => int_clr_reconstructed(v, t, pi_f),
    }
}

pub fn int_clr_reconstructed(v: &PathView, t: f64, pi_f: f64) -> f64 {
    (v.int_obs_weight - pi_f * v.int_weight) / t
}

/// One estimator variant.
pub trait Estimator: Send + Sync {
    fn kind(&self) -> EstimatorKind;
    /// Canonical lower-case name used on the command line.
    fn name(&self) -> &'static str;
    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }
    fn needs_centering(&self) -> bool;
    /// `centering` is `π(f)` (or its estimate); ignored by uncentered variants.
    fn evaluate(&self, view: &PathView, t: f64, centering: Option<f64>) -> f64;
}

struct Lr;
struct Clr;
struct IntLr;
struct IntClr;

impl Estimator for Lr {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::Lr
    }
    fn name(&self) -> &'static str {
        "lr"
    }
    fn needs_centering(&self) -> bool {
        false
    }
    fn evaluate(&self, view: &PathView, t: f64, _: Option<f64>) -> f64 {
        lr_estimate(view, t)
    }
}

impl Estimator for Clr {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::Clr
    }
    fn name(&self) -> &'static str {
        "clr"
    }
    fn needs_centering(&self) -> bool {
        true
    }
    fn evaluate(&self, view: &PathView, t: f64, centering: Option<f64>) -> f64 {
        clr_estimate(view, t, centering.expect("CLR requires a centering constant"))
    }
}

impl Estimator for IntLr {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::IntLr
    }
    fn name(&self) -> &'static str {
        "intlr"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["int-lr", "int_lr"]
    }
    fn needs_centering(&self) -> bool {
        false
    }
    fn evaluate(&self, view: &PathView, t: f64, _: Option<f64>) -> f64 {
        int_lr_estimate(view, t)
    }
}

impl Estimator for IntClr {
    fn kind(&self) -> EstimatorKind {
        EstimatorKind::IntClr
    }
    fn name(&self) -> &'static str {
        "intclr"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["int-clr", "int_clr"]
    }
    fn needs_centering(&self) -> bool {
        true
    }
    fn evaluate(&self, view: &PathView, t: f64, centering: Option<f64>) -> f64 {
        int_clr_estimate(
            view,
            t,
            centering.expect("int-CLR requires a centering constant"),
        )
    }
}

/// Name → estimator lookup.
pub struct EstimatorRegistry {
    entries: Vec<Box<dyn Estimator>>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl EstimatorRegistry {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    /// LR, CLR, int-LR and int-CLR.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        for e in [
            Box::new(Lr) as Box<dyn Estimator>,
            Box::new(Clr),
            Box::new(IntLr),
            Box::new(IntClr),
        ] {
            r.register(e).expect("built-in names are distinct");
        }
        r
    }

    pub fn register(&mut self, estimator: Box<dyn Estimator>) -> Result<(), EstimatorError> {
        let name = estimator.name();
        let clash = estimator
            .aliases()
            .iter()
            .copied()
            .chain(std::iter::once(name))
            .find(|n| self.lookup(n).is_some());
        if let Some(n) = clash {
            return Err(EstimatorError::Duplicate(n.to_string()));
        }
        self.entries.push(estimator);
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&dyn Estimator> {
        let key = name.trim().to_ascii_lowercase();
        self.entries
            .iter()
            .find(|e| e.name() == key || e.aliases().contains(&key.as_str()))
            .map(|e| e.as_ref())
    }

    pub fn get(&self, name: &str) -> Result<&dyn Estimator, EstimatorError> {
        self.lookup(name)
            .ok_or_else(|| EstimatorError::Unknown(name.to_string(), self.names().join(", ")))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Estimator> {
        self.entries.iter().map(|e| e.as_ref())
    }

    /// Resolves a comma-separated list such as `"clr,intclr"`, keeping order
    /// and dropping duplicates.
    pub fn select(&self, list: &str) -> Result<Vec<&dyn Estimator>, EstimatorError> {
        let mut out: Vec<&dyn Estimator> = Vec::new();
        for name in list.split(',').filter(|s| !s.trim().is_empty()) {
            let e = self.get(name)?;
            if !out.iter().any(|o| o.name() == e.name()) {
                out.push(e);
            }
        }
        if out.is_empty() {
            return Err(EstimatorError::Empty);
        }
        Ok(out)
    }
}
