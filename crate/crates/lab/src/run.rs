//! The full scenario grid: replicates, summaries, curves, calibration and
//! decay fits.

use std::time::Instant;

use anyhow::Result;
use nonmarginal_core::calibration::{
    additive_feasible_alpha, calibrate_beta, feasible_alpha, fnr_under_alpha_control, mpbfdr_curve,
    CalibrationResult, CurvePoint, Ensemble, FeasibleInterval, FnrUnderControl,
};
use nonmarginal_core::decision::beta_from_c;
use nonmarginal_core::hypotheses::TruthProportions;
use nonmarginal_core::metrics::{frequentist_rates, rate_fit, Estimate, FrequentistErrorReport, RateFit};
use nonmarginal_core::model::{estimate_j, Ar1Params, JSearchConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{prepare_range, FailedReplicate, Method, SimulatedEnsemble};
use crate::replicate::{MethodOutcome, NContext, ReplicateOutcome, ReplicateSeeds};
use crate::scenario::{growth_limit_check, GrowthCheck, ScenarioConfig};

/// Unconditional replicate means of the posterior rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanPosterior {
    pub fdr_xn: Estimate,
    pub fnr_xn: Estimate,
    pub mfdr_xn: Estimate,
    pub mfnr_xn: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub beta: f64,
    pub rates: FrequentistErrorReport,
    /// Fraction of replicates with `d̂ = d_t`.
    pub consistency: Estimate,
    pub mean_posterior: MeanPosterior,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Estimate {
    let xs: Vec<f64> = values.collect();
    Estimate::from_values(&xs).unwrap_or(Estimate { mean: f64::NAN, se: f64::NAN, count: 0 })
}

pub fn summarize(method: &str, beta: f64, outcomes: &[&MethodOutcome], ctx: &NContext) -> Result<MethodSummary> {
    let records: Vec<_> = outcomes.iter().map(|o| o.record(&ctx.truth)).collect();
    let rates = frequentist_rates(&records)?;
    let pick = |f: fn(&MethodOutcome) -> f64| mean_of(outcomes.iter().map(|o| f(o)));
    Ok(MethodSummary {
        method: method.into(),
        beta,
        rates,
        consistency: pick(|o| if o.correct { 1.0 } else { 0.0 }),
        mean_posterior: MeanPosterior {
            fdr_xn: pick(|o| o.posterior.fdr_xn),
            fnr_xn: pick(|o| o.posterior.fnr_xn),
            mfdr_xn: pick(|o| o.posterior.mfdr_xn),
            mfnr_xn: pick(|o| o.posterior.mfnr_xn),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationSummary {
    pub result: Option<CalibrationResult>,
    pub error: Option<String>,
    /// Non-marginal rates at `β̂` on the calibration ensemble.
    pub rates_at_beta_hat: Option<FrequentistErrorReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JSummary {
    pub j: f64,
    pub hypothesis: usize,
    pub argmin: Ar1Params,
    /// `J` with twice the grid resolution.
    pub j_refined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NReport {
    pub n: usize,
    pub m_n: usize,
    pub num_hypotheses: usize,
    pub true_nulls: usize,
    pub component_sizes: Vec<usize>,
    pub proportions: TruthProportions,
    pub feasible: FeasibleInterval,
    pub additive_feasible: FeasibleInterval,
    pub replicates: usize,
    pub failed: Vec<FailedReplicate>,
    pub nonmarginal: MethodSummary,
    pub additive: MethodSummary,
    pub reject_all: MethodSummary,
    pub j: Option<JSummary>,
    pub curve: Vec<CurvePoint>,
    pub calibration: Option<CalibrationSummary>,
    #[serde(skip)]
    pub outcomes: Vec<ReplicateOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub ns: Vec<usize>,
    pub per_n: Vec<NReport>,
    /// `J` at the largest `n`, used as the decay reference.
    pub j_reference: Option<f64>,
    pub fits: Vec<RateFitOutcome>,
    pub fnr_control: Option<FnrControlOutcome>,
    pub growth_checks: Vec<GrowthCheck>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFitOutcome {
    pub metric: String,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FnrControlOutcome {
    pub result: Option<FnrUnderControl>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Report plus wall-clock timings and replicate seeds.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: ScenarioReport,
    pub timings: Vec<StageTiming>,
    pub seeds: Vec<ReplicateSeeds>,
}

/// Stage switches for [`run_scenario_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub curve: bool,
    pub calibration: bool,
    pub j: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self { curve: true, calibration: true, j: true }
    }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunArtifacts> {
    run_scenario_with(cfg, Stages::default())
}

pub fn run_scenario_with(cfg: &ScenarioConfig, stages: Stages) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let mut seeds = Vec::new();
    let mut per_n = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let (report, t) = run_n(cfg, n, stages)?;
        seeds.extend(report.outcomes.iter().map(|o| o.seeds));
        timings.extend(t);
        per_n.push(report);
    }

    let ns = cfg.n_grid.clone();
    let j_reference = per_n.last().and_then(|r| r.j.as_ref()).map(|j| j.j);
    let j_ref = j_reference.unwrap_or(f64::NAN);
    let fits = ["mfdr_xn", "mfnr_xn"]
        .iter()
        .map(|&metric| {
            let values: Vec<f64> = per_n
                .iter()
                .map(|r| {
                    let m = &r.nonmarginal.mean_posterior;
                    if metric == "mfdr_xn" {
                        m.mfdr_xn.mean
                    } else {
                        m.mfnr_xn.mean
                    }
                })
                .collect();
            match rate_fit(metric, &values, &ns, j_ref) {
                Ok(fit) => RateFitOutcome { metric: metric.into(), fit: Some(fit), error: None },
                Err(e) => RateFitOutcome { metric: metric.into(), fit: None, error: Some(e.to_string()) },
            }
        })
        .collect();

    let calibrated: Option<Vec<FrequentistErrorReport>> = per_n
        .iter()
        .map(|r| r.calibration.as_ref().and_then(|c| c.rates_at_beta_hat.clone()))
        .collect();
    let fnr_control = calibrated.map(|reports| match fnr_under_alpha_control(&ns, &reports, j_ref) {
        Ok(r) => FnrControlOutcome { result: Some(r), error: None },
        Err(e) => FnrControlOutcome { result: None, error: Some(e.to_string()) },
    });

    let report = ScenarioReport {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        ns,
        per_n,
        j_reference,
        fits,
        fnr_control,
        growth_checks: growth_limit_check(&cfg.growth, &cfg.n_grid, &[0.001, 0.01, 0.1, 1.0]),
        warnings: cfg.warnings(),
    };
    Ok(RunArtifacts { report, timings, seeds })
}

fn timed<T>(timings: &mut Vec<StageTiming>, stage: String, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.push(StageTiming { stage, seconds: start.elapsed().as_secs_f64() });
    out
}

/// Estimates `J` at the default and at doubled grid resolution.
pub fn j_summary(ctx: &NContext, search: &JSearchConfig) -> Result<JSummary> {
    let base = estimate_j(&ctx.theta0, &ctx.spec, &ctx.design, search)?;
    let fine = JSearchConfig { grid_points: 2 * search.grid_points - 1, ..*search };
    let refined = estimate_j(&ctx.theta0, &ctx.spec, &ctx.design, &fine)?;
    Ok(JSummary { j: base.j, hypothesis: base.hypothesis, argmin: base.argmin, j_refined: refined.j })
}

fn run_n(cfg: &ScenarioConfig, n: usize, stages: Stages) -> Result<(NReport, Vec<StageTiming>)> {
    let mut timings = Vec::new();
    let ctx = NContext::new(cfg, n)?;
    let (prepared, failed) = timed(&mut timings, format!("sample n={n}"), || prepare_range(cfg, &ctx, 0, cfg.replicates));
    anyhow::ensure!(!prepared.is_empty(), "every replicate failed at n={n}");

    let beta_add = beta_from_c(cfg.decision.additive_c);
    let outcomes: Vec<(ReplicateOutcome, MethodOutcome)> = timed(&mut timings, format!("decide n={n}"), || {
        prepared
            .par_iter()
            .map(|p| {
                let o = ReplicateOutcome {
                    seeds: p.seeds,
                    nonmarginal: p.nonmarginal(&ctx, cfg.decision.beta, &cfg.decision.optimizer)?,
                    additive: p.additive(&ctx, beta_add)?,
                    truth: ctx.truth.clone(),
                };
                Ok((o, p.reject_all(&ctx)?))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let nm: Vec<&MethodOutcome> = outcomes.iter().map(|(o, _)| &o.nonmarginal).collect();
    let ad: Vec<&MethodOutcome> = outcomes.iter().map(|(o, _)| &o.additive).collect();
    let ra: Vec<&MethodOutcome> = outcomes.iter().map(|(_, r)| r).collect();
    let nonmarginal = summarize(Method::Nonmarginal.name(), cfg.decision.beta, &nm, &ctx)?;
    let additive = summarize(Method::Additive.name(), beta_add, &ad, &ctx)?;
    let reject_all = summarize("reject_all", 0.0, &ra, &ctx)?;
    let outcomes: Vec<ReplicateOutcome> = outcomes.into_iter().map(|(o, _)| o).collect();

    let j = if stages.j {
        Some(timed(&mut timings, format!("j n={n}"), || j_summary(&ctx, &cfg.j_search))?)
    } else {
        None
    };

    let mut ensemble =
        SimulatedEnsemble::from_prepared(cfg, &ctx, Method::Nonmarginal, prepared, failed.clone(), cfg.replicates);
    let curve = if stages.curve && !cfg.curve_grid.is_empty() {
        timed(&mut timings, format!("curve n={n}"), || mpbfdr_curve(&mut ensemble, &cfg.curve_grid))?
    } else {
        Vec::new()
    };
    let calibration = match (&cfg.calibration, stages.calibration) {
        (Some(c), true) => Some(timed(&mut timings, format!("calibrate n={n}"), || {
            match calibrate_beta(&mut ensemble, c) {
                Ok(r) => {
                    let rates = ensemble.evaluate(r.beta_hat).ok();
                    CalibrationSummary { result: Some(r), error: None, rates_at_beta_hat: rates }
                }
                Err(e) => CalibrationSummary { result: None, error: Some(e.to_string()), rates_at_beta_hat: None },
            }
        })),
        _ => None,
    };

    let p = ctx.proportions;
    let report = NReport {
        n,
        m_n: ctx.m,
        num_hypotheses: ctx.num_hypotheses(),
        true_nulls: ctx.truth.true_nulls(),
        component_sizes: ctx.components.sizes(),
        proportions: p,
        feasible: feasible_alpha(p.p, p.q)?,
        additive_feasible: additive_feasible_alpha(p.p0)?,
        replicates: cfg.replicates,
        failed: ensemble.failed.clone(),
        nonmarginal,
        additive,
        reject_all,
        j,
        curve,
        calibration,
        outcomes,
    };
    Ok((report, timings))
}
