use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Parameters `(ρ, σ², β₀..β_m)`; `beta[0]` is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ar1Params {
    pub rho: f64,
    pub sigma2: f64,
    pub beta: Vec<f64>,
}

impl Ar1Params {
    pub fn new(rho: f64, sigma2: f64, beta: Vec<f64>) -> Result<Self> {
        let p = Self { rho, sigma2, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(invalid("sigma2 must be positive and finite"));
        }
        if !self.rho.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(invalid("parameters must be finite"));
        }
        if self.beta.is_empty() {
            return Err(invalid("beta must contain at least the intercept"));
        }
        Ok(())
    }

    /// Number of non-intercept covariates `m`.
    pub fn num_covariates(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn sigma(&self) -> f64 {
        crate::math::sqrt(self.sigma2)
    }
}
