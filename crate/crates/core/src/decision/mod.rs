//! Decisions from posterior draws: marginal and joint posterior
//! probabilities, the `f_β` objective, its maximisation and the additive rule.

mod additive;
mod indicators;
mod optimize;

pub use additive::{additive_rule, beta_from_c, c_from_beta, reject_all, threshold_rule};
pub use indicators::{indicators, joint_w, marginal_v, objective_f, PosteriorIndicators};
pub use optimize::{optimize, AnnealingConfig, DecisionProblem, OptimizerConfig, Solution, MAX_EXACT_LIMIT};

#[cfg(test)]
mod tests;
