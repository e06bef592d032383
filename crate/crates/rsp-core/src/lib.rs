//! Simulator and inference toolkit for systems of interacting reinforced
//! stochastic processes placed on the vertices of a weighted directed network.
//!
//! Each vertex carries an inclination in [0,1] that is pushed around by
//! Bernoulli draws whose success probabilities couple the vertices through a
//! column-normalized adjacency matrix. The crate provides:
//!
//! - construction and validation of the networks ([`network`]),
//! - the biorthogonal eigenstructure driving all asymptotics ([`spectral`]),
//! - the exact stochastic dynamics plus a brute-force enumeration oracle
//!   ([`dynamics`]),
//! - asymptotic variances and covariances of the limit theorems, closed
//!   forms for the canonical examples, and deterministic product-sum
//!   oracles ([`asymptotics`]),
//! - confidence intervals and chi-square topology tests ([`inference`]),
//! - a replicated Monte Carlo harness that turns the limit theorems into
//!   finite-sample checks ([`harness`]).

pub mod asymptotics;
pub mod dynamics;
pub mod harness;
pub mod inference;
pub mod network;
pub mod spectral;

// Matrix types appear in the public API (weights, covariance reports), so
// downstream crates get the exact linear-algebra version used here.
pub use nalgebra;

pub use network::WeightedNetwork;
pub use spectral::{RegimeCase, RegimeClassification, SpectralData};
