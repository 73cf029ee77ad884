//! AR(1) model with time-varying covariates:
//! `x_t = ρ x_{t-1} + z_t'β + ε_t`, `ε_t ~ N(0, σ²)`, `x_0 = 0`.

mod asymptotics;
mod design;
mod gibbs;
mod params;
mod prior;
mod simulate;
mod stats;

pub use asymptotics::{
    estimate_j, kl_rate_h, log_likelihood_ratio, quadratic_limits, ConstrainedMinimum, JEstimate,
    JSearchConfig, KlRateInputs,
};
pub use design::{generate_design, CovariateDesign, DesignGenerator};
pub(crate) use design::column_correlation;
pub use gibbs::{gibbs_sample, BlockDiagnostics, GibbsConfig, PosteriorDraws};
pub use params::Ar1Params;
pub use prior::{PriorConfig, PriorFamily};
pub use simulate::{simulate, simulate_with_innovations, Dataset};
pub use stats::SufficientStats;
