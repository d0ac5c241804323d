// SPDX-License-Identifier: Apache-2.0
//! Likelihood-ratio sensitivity estimation for stationary distributions of
//! stochastic reaction networks.
//!
//! The crate simulates reaction networks with the direct method while
//! accumulating the likelihood-ratio weight process, turns the accumulated
//! path functionals into four gradient estimators, and checks them against
//! exact finite-truncation computations.

pub mod bench;
pub mod estimators;
pub mod experiment;
pub mod model;
pub mod network;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod ssa;
pub mod stats;
