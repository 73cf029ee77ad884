//! Bayesian non-marginal multiple testing for an AR(1) model with
//! time-varying covariates.
//!
//! The crate is `no_std` (it needs `alloc`). It covers the hypothesis family
//! and group structures ([`hypotheses`]), the autoregressive model with its
//! Gibbs sampler and KL-rate quantities ([`model`]), joint decision
//! optimization ([`decision`]), posterior and frequentist error rates
//! ([`metrics`]) and α-control by monotone bisection ([`calibration`]).
//!
//! File formats, parallel replicate fan-out and the command line live in the
//! companion `nonmarginal-lab` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod calibration;
pub mod decision;
pub mod error;
pub mod hypotheses;
pub(crate) mod math;
pub mod metrics;
pub mod model;
pub mod seed;

pub use error::{Error, Result};
