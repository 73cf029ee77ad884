
use crate::error::{invalid, Result};
use crate::hypotheses::DecisionConfig;

/// `β = c / (1 + c)`.
pub fn beta_from_c(c: f64) -> f64 {
    c / (1.0 + c)
}

/// Inverse of [`beta_from_c`].
pub fn c_from_beta(beta: f64) -> f64 {
    beta / (1.0 - beta)
}

/// `d_i = I(v_i > threshold)`, strict.
pub fn threshold_rule(v: &[f64], threshold: f64) -> DecisionConfig {
    DecisionConfig { bits: v.iter().map(|&x| x > threshold).collect() }
}

/// Bayes rule under the additive loss with penalty `c`: `d_i = I(v_i > c/(1+c))`.
pub fn additive_rule(v: &[f64], c: f64) -> Result<DecisionConfig> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(invalid("additive penalty c must be positive"));
    }
    Ok(threshold_rule(v, beta_from_c(c)))
}

/// The `β = 0` end of the additive family: every hypothesis rejected.
pub fn reject_all(h: usize) -> DecisionConfig {
    DecisionConfig::ones(h)
}

