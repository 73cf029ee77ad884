//! Scenario configuration with every default spelled out.

use anyhow::{bail, ensure, Context, Result};
use nonmarginal_core::calibration::CalibrationConfig;
use nonmarginal_core::decision::OptimizerConfig;
use nonmarginal_core::hypotheses::TestSpec;
use nonmarginal_core::model::{Ar1Params, DesignGenerator, GibbsConfig, JSearchConfig, PriorConfig, PriorFamily};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// How the number of covariates scales with `n` across the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum GrowthRule {
    FixedM { m: usize },
    /// `m_n = ⌈n^a⌉`, `a < 1`.
    Sublinear { a: f64 },
    /// `m_n = ⌈c·n·log n⌉`.
    Ultra { c: f64 },
}

impl GrowthRule {
    pub fn m_for(&self, n: usize) -> usize {
        match *self {
            Self::FixedM { m } => m,
            Self::Sublinear { a } => (n as f64).powf(a).ceil() as usize,
            Self::Ultra { c } => (c * n as f64 * (n as f64).ln()).ceil() as usize,
        }
    }

    /// `log(m_n) − n·c`, which must tend to `−∞` for every `c > 0`.
    pub fn log_growth_limit(&self, n: usize, c: f64) -> f64 {
        (self.m_for(n).max(1) as f64).ln() - n as f64 * c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub rho0: f64,
    pub sigma2_0: f64,
    pub intercept: f64,
    /// Indices (1-based covariates) with nonzero coefficients.
    pub active: Vec<usize>,
    pub magnitude: f64,
    /// Alternate the signs of active coefficients.
    #[serde(default)]
    pub alternate_signs: bool,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self { rho0: 0.5, sigma2_0: 1.0, intercept: 0.0, active: vec![1, 2, 3], magnitude: 1.5, alternate_signs: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub generator: DesignGenerator,
    pub scale: f64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self { generator: DesignGenerator::IidGaussianBounded, scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub include_rho_test: bool,
    pub null_radius: f64,
    pub rho_null_bound: f64,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self { include_rho_test: true, null_radius: 0.1, rho_null_bound: 1.0 }
    }
}

/// Groups from absolute column correlations `≥ threshold`, capped in size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRule {
    pub threshold: f64,
    pub max_group_size: usize,
}

impl Default for GroupRule {
    fn default() -> Self {
        Self { threshold: 0.5, max_group_size: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionSettings {
    /// Penalty of the non-marginal rule.
    pub beta: f64,
    /// Penalty `c` of the additive rule (`β = c/(1+c)`).
    pub additive_c: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for DecisionSettings {
    fn default() -> Self {
        Self { beta: 0.5, additive_c: 1.0, optimizer: OptimizerConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub draws: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self { draws: 4000, burn_in: 1000, thinning: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_grid: Vec<usize>,
    pub growth: GrowthRule,
    pub truth: TruthSpec,
    pub design: DesignSpec,
    pub prior: PriorConfig,
    pub test: TestSettings,
    pub groups: GroupRule,
    pub decision: DecisionSettings,
    /// Runs `β` calibration at every `n` when present.
    pub calibration: Option<CalibrationConfig>,
    /// `β` values for the common-random-numbers mpBFDR curve; empty skips it.
    pub curve_grid: Vec<f64>,
    pub replicates: usize,
    pub master_seed: u64,
    pub sampler: SamplerSettings,
    pub j_search: JSearchConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            n_grid: vec![250, 500, 1000, 2000],
            growth: GrowthRule::FixedM { m: 10 },
            truth: TruthSpec::default(),
            design: DesignSpec::default(),
            prior: PriorConfig::default(),
            test: TestSettings::default(),
            groups: GroupRule::default(),
            decision: DecisionSettings::default(),
            calibration: Some(CalibrationConfig::default()),
            curve_grid: (0..10).map(|k| k as f64 / 10.0).collect(),
            replicates: 200,
            master_seed: 20_240_601,
            sampler: SamplerSettings::default(),
            j_search: JSearchConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("parsing scenario config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.n_grid.is_empty(), "n_grid is empty");
        ensure!(self.n_grid.windows(2).all(|w| w[0] < w[1]), "n_grid must be strictly increasing");
        ensure!(self.replicates >= 1, "need at least one replicate");
        ensure!(self.sampler.draws >= 1 && self.sampler.thinning >= 1, "sampler needs draws and thinning >= 1");
        ensure!((0.0..1.0).contains(&self.decision.beta), "decision beta must lie in [0, 1)");
        ensure!(self.decision.additive_c > 0.0, "additive c must be positive");
        match self.growth {
            GrowthRule::FixedM { .. } => {}
            GrowthRule::Sublinear { a } => ensure!(a > 0.0 && a < 1.0, "sublinear growth needs 0 < a < 1"),
            GrowthRule::Ultra { c } => ensure!(c > 0.0, "ultra growth needs c > 0"),
        }
        let m_min = self.m_for(self.n_grid[0]);
        if let Some(&a) = self.truth.active.iter().find(|&&a| a == 0 || a > m_min) {
            bail!("active covariate {a} outside 1..={m_min}");
        }
        ensure!(self.truth.rho0.abs() < 1.0, "rho0 must be stationary");
        ensure!(self.truth.sigma2_0 > 0.0, "sigma2_0 must be positive");
        self.prior.validate()?;
        self.decision.optimizer.validate()?;
        self.test_spec(m_min).validate()?;
        if self.curve_grid.windows(2).any(|w| w[0] >= w[1]) || self.curve_grid.iter().any(|b| !(0.0..1.0).contains(b)) {
            bail!("curve_grid must be strictly increasing inside [0, 1)");
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if matches!(self.growth, GrowthRule::Ultra { .. })
            && matches!(self.prior.family, PriorFamily::IndependentGaussian { .. })
        {
            out.push("ultra growth with an independent_gaussian prior is outside the covered theory; use gp_decay".into());
        }
        out
    }

    pub fn m_for(&self, n: usize) -> usize {
        self.growth.m_for(n)
    }

    pub fn test_spec(&self, m: usize) -> TestSpec {
        TestSpec {
            num_covariates: m,
            include_rho_test: self.test.include_rho_test,
            null_radius: self.test.null_radius,
            rho_null_bound: self.test.rho_null_bound,
        }
    }

    pub fn theta0(&self, m: usize) -> Result<Ar1Params> {
        let mut beta = vec![0.0; m + 1];
        beta[0] = self.truth.intercept;
        for (k, &a) in self.truth.active.iter().enumerate() {
            ensure!(a >= 1 && a <= m, "active covariate {a} outside 1..={m}");
            let sign = if self.truth.alternate_signs && k % 2 == 1 { -1.0 } else { 1.0 };
            beta[a] = sign * self.truth.magnitude;
        }
        Ok(Ar1Params::new(self.truth.rho0, self.truth.sigma2_0, beta)?)
    }

    pub fn gibbs(&self, seed: u64) -> GibbsConfig {
        GibbsConfig { draws: self.sampler.draws, burn_in: self.sampler.burn_in, thinning: self.sampler.thinning, seed }
    }
}

/// `m_n e^{−nc}` on the grid for one `c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub c: f64,
    pub values: Vec<f64>,
    /// Non-increasing along the grid and `log(m_n) − nc → −∞` far out.
    pub vanishing: bool,
}

pub fn growth_limit_check(rule: &GrowthRule, grid: &[usize], cs: &[f64]) -> Vec<GrowthCheck> {
    cs.iter()
        .map(|&c| {
            let values: Vec<f64> = grid.iter().map(|&n| rule.log_growth_limit(n, c).exp()).collect();
            let far = [1usize << 20, 1 << 24, 1 << 28].map(|n| rule.log_growth_limit(n, c));
            let vanishing = values.windows(2).all(|w| w[1] <= w[0])
                && far.windows(2).all(|w| w[1] < w[0])
                && far[2] < -100.0;
            GrowthCheck { c, values, vanishing }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_twelve_hypotheses() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.test_spec(cfg.m_for(250)).num_hypotheses(), 12);
        let t = cfg.theta0(10).unwrap();
        assert_eq!(t.beta.iter().filter(|b| **b != 0.0).count(), 3);
    }

    #[test]
    fn json_round_trip_and_hash() {
        let cfg = ScenarioConfig::default();
        let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let partial = ScenarioConfig::from_json(r#"{"replicates": 5}"#).unwrap();
        assert_eq!(partial.replicates, 5);
        assert_ne!(partial.hash(), cfg.hash());
    }

    #[test]
    fn growth_rules() {
        assert_eq!(GrowthRule::Sublinear { a: 0.5 }.m_for(250), 16);
        assert_eq!(GrowthRule::Ultra { c: 0.01 }.m_for(100), 5);
        for rule in [GrowthRule::FixedM { m: 10 }, GrowthRule::Sublinear { a: 0.5 }, GrowthRule::Ultra { c: 0.01 }] {
            for g in growth_limit_check(&rule, &[250, 500, 1000, 2000], &[0.01, 0.1, 1.0]) {
                assert!(g.vanishing, "{rule:?} c={}", g.c);
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ScenarioConfig::default();
        cfg.n_grid = vec![500, 250];
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.truth.active = vec![11];
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.growth = GrowthRule::Ultra { c: 0.01 };
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.warnings().len(), 1);
    }
}
