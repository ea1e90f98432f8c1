//! Stochastic solutions of discrete-time state-space systems.
//!
//! A state map `f: X × U → X` driven by a stochastic input process has a
//! stochastic solution: a joint law of state and input sequences that is
//! invariant under one step of the system. This crate constructs such laws by
//! Monte Carlo iteration on ensembles of truncated path windows, measures
//! convergence with empirical Wasserstein distances on weighted sequence
//! spaces, and checks the sufficient contractivity and boundedness conditions
//! that guarantee existence and uniqueness.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`seqspace`] | weighting sequences, path windows, weighted ℓ¹ metrics |
//! | [`models`] | GARCH, state-affine, ESN, Euler SDE and linear test maps |
//! | [`inputs`] | hidden-input sampling and causal input filters |
//! | [`wasserstein`] | exact and entropic empirical optimal transport |
//! | [`dynamics`] | fixed-point iteration, rate fitting, consistency checks |
//! | [`certificates`] | contractivity / boundedness certificates, ESN bounds |
//!
//! With the `cli` feature, [`config`] and [`experiments`] drive the
//! `stochesp` command-line runner.

// `!(x > 0.0)` guards are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificates;
pub mod dynamics;
mod error;
pub mod inputs;
pub mod models;
mod numeric;
pub mod seqspace;
pub mod wasserstein;

#[cfg(feature = "cli")]
pub mod config;
#[cfg(feature = "cli")]
pub mod experiments;

pub use certificates::{Certificate, CertificateKind, CertificateMethod};
pub use dynamics::{ConvergeConfig, ConvergenceTrace, FixedPointEstimate};
pub use error::{Error, Result};

pub use inputs::{CausalFilter, Ensemble, HiddenDist, HiddenSampler, InputEnsemble};
pub use models::{StateMap, StateModel};
pub use seqspace::{BaseMetric, PathPair, PathWindow, ProductMetric, WeightVector};
pub use wasserstein::{OtMethod, OtResult};

/// Library version recorded in run summaries.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
