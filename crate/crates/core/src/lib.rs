//! Robust estimation for one-shot device test data under lognormal
//! lifetimes.
//!
//! One-shot devices reveal only a binary status at their inspection
//! time, so each test condition contributes a binomial observation of
//! the lognormal failure probability. This crate fits the weighted
//! minimum density power divergence estimator family for such data --
//! the tuning parameter beta trades efficiency (beta = 0 is the MLE)
//! against robustness to contaminated test groups -- and builds the
//! surrounding inference: sandwich covariances, transformed confidence
//! intervals for reliability and mean lifetime, Wald-type tests,
//! influence-function diagnostics, and Monte Carlo studies of all of
//! the above.
//!
//! With the default `parallel` feature, multi-start fits and simulation
//! replications run on the rayon thread pool; disabling it yields a
//! fully sequential build with identical results.

pub mod error;
pub mod estimation;
pub mod inference;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod objectives;
pub mod robustness;

mod parallel;

pub use error::{Error, Result};
