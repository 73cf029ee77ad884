//! One simulated dataset through sampling, decisions and posterior rates.

use anyhow::Result;
use nonmarginal_core::decision::{indicators, threshold_rule, beta_from_c, DecisionProblem, OptimizerConfig};
use nonmarginal_core::hypotheses::{
    build_groups, connected_components, truth_proportions, ComponentPartition, DecisionConfig, GroupStructure,
    TestSpec, TruthAssignment, TruthProportions,
};
use nonmarginal_core::metrics::{
    false_discovery_proportion, false_nondiscovery_proportion, posterior_rates, PosteriorErrorReport, ReplicateRecord,
};
use nonmarginal_core::model::{generate_design, gibbs_sample, simulate, Ar1Params, CovariateDesign};
use nonmarginal_core::seed::{derive_seed, stream};
use serde::Serialize;

use crate::scenario::ScenarioConfig;

/// Everything shared by the replicates at one `n`.
#[derive(Debug, Clone)]
pub struct NContext {
    pub n: usize,
    pub m: usize,
    pub theta0: Ar1Params,
    pub spec: TestSpec,
    pub design: CovariateDesign,
    pub groups: GroupStructure,
    pub components: ComponentPartition,
    pub truth: TruthAssignment,
    pub proportions: TruthProportions,
}

impl NContext {
    /// The design is drawn once per `n` and held fixed across replicates.
    pub fn new(cfg: &ScenarioConfig, n: usize) -> Result<Self> {
        let m = cfg.m_for(n);
        let theta0 = cfg.theta0(m)?;
        let spec = cfg.test_spec(m);
        let design_seed = derive_seed(cfg.master_seed, &[stream::DESIGN, n as u64]);
        let design = generate_design(n, m, cfg.design.generator, cfg.design.scale, design_seed)?;
        let groups = build_groups(&design, &spec, cfg.groups.threshold, cfg.groups.max_group_size)?;
        let components = connected_components(&groups);
        let truth = nonmarginal_core::hypotheses::truth_from_params(&theta0, &spec)?;
        let proportions = truth_proportions(&groups, &truth)?;
        Ok(Self { n, m, theta0, spec, design, groups, components, truth, proportions })
    }

    pub fn num_hypotheses(&self) -> usize {
        self.spec.num_hypotheses()
    }
}

/// Seeds of one replicate, all derived from `(master_seed, n, id)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplicateSeeds {
    pub n: usize,
    pub replicate_id: usize,
    pub noise: u64,
    pub gibbs: u64,
    pub anneal: u64,
}

impl ReplicateSeeds {
    pub fn derive(master: u64, n: usize, id: usize) -> Self {
        let path = |tag| derive_seed(master, &[tag, n as u64, id as u64]);
        Self { n, replicate_id: id, noise: path(stream::NOISE), gibbs: path(stream::GIBBS), anneal: path(stream::ANNEAL) }
    }
}

/// A replicate after sampling; can be decided at any `β` without
/// resampling.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seeds: ReplicateSeeds,
    pub problem: DecisionProblem,
    pub v: Vec<f64>,
}

pub fn prepare(cfg: &ScenarioConfig, ctx: &NContext, id: usize) -> Result<Prepared> {
    let seeds = ReplicateSeeds::derive(cfg.master_seed, ctx.n, id);
    let data = simulate(&ctx.theta0, &ctx.design, ctx.n, seeds.noise)?;
    let draws = gibbs_sample(&data, &cfg.prior, &cfg.gibbs(seeds.gibbs))?;
    let ind = indicators(&draws, &ctx.spec)?;
    let problem = DecisionProblem::new(&ind, &ctx.groups, &ctx.components)?;
    let v = problem.v();
    Ok(Prepared { seeds, problem, v })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub beta: f64,
    pub d_hat: DecisionConfig,
    pub posterior: PosteriorErrorReport,
    pub fdp: f64,
    pub fnp: f64,
    pub correct: bool,
}

impl MethodOutcome {
    pub fn record(&self, truth: &TruthAssignment) -> ReplicateRecord {
        ReplicateRecord { d_hat: self.d_hat.clone(), truth: truth.clone(), posterior: self.posterior }
    }
}

fn outcome(p: &Prepared, truth: &TruthAssignment, beta: f64, d: DecisionConfig) -> Result<MethodOutcome> {
    let w = p.problem.w(&d);
    let posterior = posterior_rates(&p.v, &w, &d)?;
    Ok(MethodOutcome {
        beta,
        fdp: false_discovery_proportion(&d, truth),
        fnp: false_nondiscovery_proportion(&d, truth),
        correct: d == truth.d_t,
        posterior,
        d_hat: d,
    })
}

impl Prepared {
    pub fn nonmarginal(&self, ctx: &NContext, beta: f64, opt: &OptimizerConfig) -> Result<MethodOutcome> {
        let cfg = OptimizerConfig { seed: self.seeds.anneal ^ opt.seed, ..*opt };
        let sol = self.problem.solve(beta, &cfg)?;
        outcome(self, &ctx.truth, beta, sol.d)
    }

    /// Additive rule at threshold `β`; `β = 0` with `reject_all` rejects
    /// every hypothesis.
    pub fn additive(&self, ctx: &NContext, beta: f64) -> Result<MethodOutcome> {
        outcome(self, &ctx.truth, beta, threshold_rule(&self.v, beta))
    }

    pub fn reject_all(&self, ctx: &NContext) -> Result<MethodOutcome> {
        outcome(self, &ctx.truth, 0.0, DecisionConfig::ones(ctx.num_hypotheses()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub seeds: ReplicateSeeds,
    pub nonmarginal: MethodOutcome,
    pub additive: MethodOutcome,
    pub truth: TruthAssignment,
}

/// Simulate, sample, decide with both rules and score one replicate.
pub fn run_replicate(cfg: &ScenarioConfig, ctx: &NContext, id: usize) -> Result<ReplicateOutcome> {
    let p = prepare(cfg, ctx, id)?;
    Ok(ReplicateOutcome {
        seeds: p.seeds,
        nonmarginal: p.nonmarginal(ctx, cfg.decision.beta, &cfg.decision.optimizer)?,
        additive: p.additive(ctx, beta_from_c(cfg.decision.additive_c))?,
        truth: ctx.truth.clone(),
    })
}
