//! Variance-reduced stochastic Expectation-Maximization in the expectation
//! space.
//!
//! The crate provides batch EM, Online-EM and g-SPIDER-EM (with constant or
//! geometric epoch lengths and full or partial resets of the estimator) on
//! top of a model-agnostic [`ModelSpec`] contract, a shared-covariance
//! Gaussian mixture backend, a benchmark harness and a Monte-Carlo
//! verification suite for the identities the algorithms rely on.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod model;
pub mod samplers;
pub mod solvers;
pub mod stats;

pub use error::{Error, Result};
pub use gmm::{GaussianMixture, GmmParams};
pub use model::{mean_field, Counters, ModelSpec};
pub use stats::StatVector;
