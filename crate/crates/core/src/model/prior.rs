use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::seed;

/// Diagonal jitter added to the squared-exponential kernel.
pub const GP_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorFamily {
    /// `β_i ~ N(0, beta_sd²)` independently, intercept included.
    IndependentGaussian { beta_sd: f64 },
    /// `β_i = γ_i η̃(i/m)` for `i ≥ 1`, with `η̃` a squared-exponential
    /// Gaussian process and `γ_i = L·r^i`; the intercept is `N(0, intercept_sd²)`.
    GpDecay {
        gp_lengthscale: f64,
        gp_amplitude: f64,
        decay_base: f64,
        decay_scale: f64,
        intercept_sd: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    #[serde(flatten)]
    pub family: PriorFamily,
    pub rho_prior_sd: f64,
    /// Inverse-gamma `(shape, rate)` for `σ²`.
    pub sigma2_shape: f64,
    pub sigma2_rate: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            family: PriorFamily::IndependentGaussian { beta_sd: 10.0 },
            rho_prior_sd: 1.0,
            sigma2_shape: 2.0,
            sigma2_rate: 1.0,
        }
    }
}

/// The β prior rewritten as `β = Γ β̃`, `β̃ ~ N(0, P̃⁻¹)`.
///
/// Keeping `Γ` separate avoids forming precisions of order `1/γ_i²` for the
/// geometrically decaying weights.
#[derive(Debug, Clone)]
pub(crate) struct BetaPrior {
    pub gamma: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.rho_prior_sd) || !pos(self.sigma2_shape) || !pos(self.sigma2_rate) {
            return Err(invalid("rho_prior_sd and sigma2 prior parameters must be positive"));
        }
        match self.family {
            PriorFamily::IndependentGaussian { beta_sd } => {
                if !pos(beta_sd) {
                    return Err(invalid("beta_sd must be positive"));
                }
            }
            PriorFamily::GpDecay { gp_lengthscale, gp_amplitude, decay_base, decay_scale, intercept_sd } => {
                if !pos(gp_lengthscale) || !pos(gp_amplitude) || !pos(decay_scale) || !pos(intercept_sd) {
                    return Err(invalid("gp_decay scales must be positive"));
                }
                if !(decay_base > 0.0 && decay_base < 1.0) {
                    return Err(invalid("decay_base must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Decay weights `γ_1..γ_m` (empty for the independent family).
    pub fn decay_weights(&self, m: usize) -> Vec<f64> {
        match self.family {
            PriorFamily::IndependentGaussian { .. } => Vec::new(),
            PriorFamily::GpDecay { decay_base, decay_scale, .. } => {
                (1..=m).map(|i| decay_scale * math::powi(decay_base, i as i32)).collect()
            }
        }
    }

    /// Squared-exponential kernel over `x̃_i = i/m`, `i = 1..m`, with jitter.
    pub fn gp_kernel(&self, m: usize) -> Option<DMatrix<f64>> {
        match self.family {
            PriorFamily::IndependentGaussian { .. } => None,
            PriorFamily::GpDecay { gp_lengthscale, gp_amplitude, .. } => {
                let grid = |i: usize| (i + 1) as f64 / m as f64;
                let amp2 = gp_amplitude * gp_amplitude;
                Some(DMatrix::from_fn(m, m, |i, j| {
                    let d = grid(i) - grid(j);
                    let k = amp2 * math::exp(-d * d / (2.0 * gp_lengthscale * gp_lengthscale));
                    if i == j {
                        k + GP_JITTER
                    } else {
                        k
                    }
                }))
            }
        }
    }

    pub(crate) fn beta_prior(&self, m: usize) -> Result<BetaPrior> {
        self.validate()?;
        match self.family {
            PriorFamily::IndependentGaussian { beta_sd } => Ok(BetaPrior {
                gamma: DVector::from_element(m + 1, 1.0),
                precision: DMatrix::from_diagonal_element(m + 1, m + 1, 1.0 / (beta_sd * beta_sd)),
            }),
            PriorFamily::GpDecay { intercept_sd, .. } => {
                let mut gamma = DVector::from_element(m + 1, 1.0);
                for (i, g) in self.decay_weights(m).into_iter().enumerate() {
                    gamma[i + 1] = g;
                }
                let mut precision = DMatrix::zeros(m + 1, m + 1);
                precision[(0, 0)] = 1.0 / (intercept_sd * intercept_sd);
                if m > 0 {
                    let k = self.gp_kernel(m).expect("gp family");
                    let chol = k.cholesky().ok_or_else(|| {
                        Error::NumericalFailure("GP kernel is not positive definite after jitter".into())
                    })?;
                    let kinv = chol.inverse();
                    precision.view_mut((1, 1), (m, m)).copy_from(&kinv);
                }
                Ok(BetaPrior { gamma, precision })
            }
        }
    }

    /// Prior covariance of `β` (`D K D` block plus the intercept variance).
    pub fn beta_covariance(&self, m: usize) -> Result<DMatrix<f64>> {
        self.validate()?;
        match self.family {
            PriorFamily::IndependentGaussian { beta_sd } => {
                Ok(DMatrix::from_diagonal_element(m + 1, m + 1, beta_sd * beta_sd))
            }
            PriorFamily::GpDecay { intercept_sd, .. } => {
                let mut cov = DMatrix::zeros(m + 1, m + 1);
                cov[(0, 0)] = intercept_sd * intercept_sd;
                if m > 0 {
                    let k = self.gp_kernel(m).expect("gp family");
                    let g = self.decay_weights(m);
                    for i in 0..m {
                        for j in 0..m {
                            cov[(i + 1, j + 1)] = g[i] * k[(i, j)] * g[j];
                        }
                    }
                }
                Ok(cov)
            }
        }
    }

    /// One prior draw of `β₀..β_m`.
    pub fn sample_beta(&self, m: usize, rng: &mut seed::Rng) -> Result<Vec<f64>> {
        let bp = self.beta_prior(m)?;
        let chol = bp.precision.clone().cholesky().ok_or_else(|| {
            Error::NumericalFailure("prior precision is not positive definite".into())
        })?;
        let xi = DVector::from_fn(m + 1, |_, _| StandardNormal.sample(rng));
        // L L' = P  ⇒  L'^{-1} ξ ~ N(0, P⁻¹)
        let tilde = chol
            .l()
            .transpose()
            .solve_upper_triangular(&xi)
            .ok_or_else(|| Error::NumericalFailure("triangular solve failed".into()))?;
        Ok(tilde.component_mul(&bp.gamma).iter().copied().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp() -> PriorConfig {
        PriorConfig {
            family: PriorFamily::GpDecay {
                gp_lengthscale: 0.3,
                gp_amplitude: 1.5,
                decay_base: 0.7,
                decay_scale: 2.0,
                intercept_sd: 5.0,
            },
            ..PriorConfig::default()
        }
    }

    #[test]
    fn decay_weights_sum_closed_form() {
        let p = gp();
        for m in [1usize, 5, 40, 200] {
            let s: f64 = p.decay_weights(m).iter().map(|g| libm::fabs(*g)).sum();
            let closed = 2.0 * 0.7 * (1.0 - libm::pow(0.7, m as f64)) / (1.0 - 0.7);
            assert!(libm::fabs(s - closed) < 1e-12, "m={m}: {s} vs {closed}");
        }
    }

    #[test]
    fn reparameterized_precision_matches_covariance() {
        let p = gp();
        let m = 6;
        let bp = p.beta_prior(m).unwrap();
        let cov = p.beta_covariance(m).unwrap();
        // Γ P̃⁻¹ Γ == cov
        let pinv = bp.precision.clone().cholesky().unwrap().inverse();
        let g = DMatrix::from_diagonal(&bp.gamma);
        let rebuilt = &g * pinv * &g;
        for (a, b) in rebuilt.iter().zip(cov.iter()) {
            assert!(libm::fabs(a - b) < 1e-6 * (1.0 + libm::fabs(*b)), "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_decay_base() {
        let mut p = gp();
        if let PriorFamily::GpDecay { ref mut decay_base, .. } = p.family {
            *decay_base = 1.0;
        }
        assert!(p.validate().is_err());
    }
}
