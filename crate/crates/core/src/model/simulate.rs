use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use super::{Ar1Params, CovariateDesign};
use crate::error::{invalid, Result};
use crate::seed::{self, stream};

/// An observed series together with the design that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `x_1..x_n`; `x_0 = 0` is implicit.
    pub x: Vec<f64>,
    pub design: CovariateDesign,
    pub seed: u64,
}

impl Dataset {
    pub fn new(x: Vec<f64>, design: CovariateDesign, seed: u64) -> Result<Self> {
        if x.len() != design.n() {
            return Err(invalid("series length must match design rows"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("series must be finite"));
        }
        Ok(Self { x, design, seed })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `x_{t-1}` for `t = 1..n` (0-based index `t-1`).
    #[inline]
    pub fn lag(&self, idx: usize) -> f64 {
        if idx == 0 {
            0.0
        } else {
            self.x[idx - 1]
        }
    }
}

fn check_dims(theta: &Ar1Params, design: &CovariateDesign, n: usize) -> Result<()> {
    theta.validate()?;
    if design.n() != n {
        return Err(invalid("design rows must equal n"));
    }
    if theta.beta.len() != design.z.ncols() {
        return Err(invalid("beta length must equal design columns"));
    }
    Ok(())
}

/// Runs the recursion with explicit standardized innovations `xi`
/// (`ε_t = σ₀ ξ_t`).
pub fn simulate_with_innovations(
    theta0: &Ar1Params,
    design: &CovariateDesign,
    xi: &[f64],
) -> Result<Vec<f64>> {
    check_dims(theta0, design, xi.len())?;
    let sigma = theta0.sigma();
    let mut x = Vec::with_capacity(xi.len());
    let mut prev = 0.0;
    for (t, e) in xi.iter().enumerate() {
        let mut mean = theta0.rho * prev;
        for (j, b) in theta0.beta.iter().enumerate() {
            mean += design.z[(t, j)] * b;
        }
        let cur = mean + sigma * e;
        x.push(cur);
        prev = cur;
    }
    Ok(x)
}

/// Simulates `x_t = ρ₀x_{t-1} + z_t'β₀ + ε_t` with `x_0 = 0`.
pub fn simulate(theta0: &Ar1Params, design: &CovariateDesign, n: usize, seed: u64) -> Result<Dataset> {
    check_dims(theta0, design, n)?;
    let mut rng = seed::rng_from(seed, &[stream::NOISE]);
    let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = simulate_with_innovations(theta0, design, &xi)?;
    Dataset::new(x, design.clone(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_design, DesignGenerator};
    use alloc::vec;

    #[test]
    fn noiseless_intercept_is_constant() {
        let design = generate_design(40, 2, DesignGenerator::IidGaussianBounded, 1.0, 1).unwrap();
        let theta = Ar1Params::new(0.0, 1e-30, vec![2.5, 0.0, 0.0]).unwrap();
        let d = simulate(&theta, &design, 40, 4).unwrap();
        assert!(d.x.iter().all(|&v| libm::fabs(v - 2.5) < 1e-12));
    }

    #[test]
    fn stationary_variance() {
        let n = 100_000;
        let design = generate_design(n, 0, DesignGenerator::IidGaussianBounded, 1.0, 2).unwrap();
        let theta = Ar1Params::new(0.5, 1.0, vec![0.0]).unwrap();
        let d = simulate(&theta, &design, n, 8).unwrap();
        let mean = d.x.iter().sum::<f64>() / n as f64;
        let var = d.x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        // var of the sample variance of an AR(1): 2γ₀²(1+ρ²)/(1-ρ²)/n
        let gamma0 = 4.0 / 3.0;
        let se = libm::sqrt(2.0 * gamma0 * gamma0 * (1.0 + 0.25) / (1.0 - 0.25) / n as f64);
        assert!(libm::fabs(var - gamma0) < 3.0 * se, "var {var} se {se}");
    }

    #[test]
    fn deterministic_given_seed() {
        let design = generate_design(30, 1, DesignGenerator::IidGaussianBounded, 1.0, 1).unwrap();
        let theta = Ar1Params::new(0.3, 1.0, vec![0.0, 1.0]).unwrap();
        let a = simulate(&theta, &design, 30, 9).unwrap();
        let b = simulate(&theta, &design, 30, 9).unwrap();
        assert_eq!(a.x, b.x);
    }
}
