// SPDX-License-Identifier: Apache-2.0
//! Exact computations on finite truncations of the state space.
//!
//! Given a [`Truncation`], the generator is assembled as a sparse matrix
//! (transitions that leave the truncation are dropped), and stationary
//! distributions, Poisson solutions, exact sensitivities and asymptotic
//! covariances follow from dense linear solves. The assumption checkers
//! (irreducibility and Foster–Lyapunov drift) live in [`checks`].

mod checks;
mod generator;
mod limits;
mod sensitivity;
mod solve;
mod truncation;

pub use checks::{
    assumption_diagnostics, check_irreducible, check_lyapunov, check_lyapunov_with,
    AssumptionDiagnostics, IrreducibilityReport, LyapunovReport,
};
pub use generator::{build_generator, SparseGenerator};
pub use limits::{sample_limit_distributions, LimitSamples};
pub use sensitivity::{
    asymptotic_covariance, linear_moment_sensitivity, sensitivity_direct,
    sensitivity_direct_mass_action, sensitivity_fd, AsymptoticCovariance, LinearMoments,
};
pub use solve::{solve_poisson, stationary_distribution, Fsp, FspSolution, Residuals};
pub use truncation::{Truncation, TruncationSpec};

use thiserror::Error;

use crate::network::NetworkError;

/// Largest truncation handed to the dense solver.
pub const DENSE_LIMIT: usize = 4096;

/// Hard cap on reachability enumeration.
pub const ENUMERATION_LIMIT: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("truncation is empty")]
    EmptyTruncation,
    #[error("initial state {0} lies outside the truncation bounds")]
    InitialOutside(String),
    #[error("truncation has {0} states, more than the enumeration limit")]
    TooManyStates(usize),
    #[error("truncation has {0} states; the dense solver handles at most {DENSE_LIMIT}")]
    TooLargeForDense(usize),
    #[error("generator is reducible on the truncation ({components} communicating classes)")]
    Reducible { components: usize },
    #[error("linear system is singular: {0}")]
    Singular(String),
    #[error("reaction {0} has an intensity that is not affine in the state")]
    NonAffine(usize),
    #[error("observable is not a linear combination of species counts")]
    NonLinearObservable,
    #[error("Poisson solution missing; solve the Poisson equation first")]
    MissingPoisson,
    #[error("covariance rate matrix is not positive semidefinite (det = {0})")]
    NotPsd(f64),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}
