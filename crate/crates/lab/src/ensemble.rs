//! Replicate ensembles with common random numbers across `β`.

use anyhow::Result;
use nonmarginal_core::calibration::Ensemble;
use nonmarginal_core::metrics::{frequentist_rates, FrequentistErrorReport, ReplicateRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::replicate::{prepare, NContext, Prepared};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Nonmarginal,
    Additive,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Nonmarginal => "nonmarginal",
            Self::Additive => "additive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedReplicate {
    pub replicate_id: usize,
    pub error: String,
}

/// Prepared replicates for one `n`; failed ones are kept aside.
pub struct SimulatedEnsemble<'a> {
    pub cfg: &'a ScenarioConfig,
    pub ctx: &'a NContext,
    pub method: Method,
    pub prepared: Vec<Prepared>,
    pub failed: Vec<FailedReplicate>,
    ids: usize,
}

/// Prepares ids `from..to` in parallel, ordered by id.
pub fn prepare_range(
    cfg: &ScenarioConfig,
    ctx: &NContext,
    from: usize,
    to: usize,
) -> (Vec<Prepared>, Vec<FailedReplicate>) {
    let results: Vec<(usize, Result<Prepared>)> = (from..to).into_par_iter().map(|id| (id, prepare(cfg, ctx, id))).collect();
    let mut ok = Vec::with_capacity(to - from);
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(p) => ok.push(p),
            Err(e) => failed.push(FailedReplicate { replicate_id: id, error: format!("{e:#}") }),
        }
    }
    (ok, failed)
}

impl<'a> SimulatedEnsemble<'a> {
    pub fn new(cfg: &'a ScenarioConfig, ctx: &'a NContext, method: Method) -> Self {
        let (prepared, failed) = prepare_range(cfg, ctx, 0, cfg.replicates);
        Self::from_prepared(cfg, ctx, method, prepared, failed, cfg.replicates)
    }

    pub fn from_prepared(
        cfg: &'a ScenarioConfig,
        ctx: &'a NContext,
        method: Method,
        prepared: Vec<Prepared>,
        failed: Vec<FailedReplicate>,
        ids: usize,
    ) -> Self {
        Self { cfg, ctx, method, prepared, failed, ids }
    }

    pub fn records(&self, beta: f64) -> Result<Vec<ReplicateRecord>> {
        let opt = &self.cfg.decision.optimizer;
        self.prepared
            .par_iter()
            .map(|p| {
                let o = match self.method {
                    Method::Nonmarginal => p.nonmarginal(self.ctx, beta, opt)?,
                    Method::Additive => p.additive(self.ctx, beta)?,
                };
                Ok(o.record(&self.ctx.truth))
            })
            .collect()
    }
}

fn to_core(e: anyhow::Error) -> nonmarginal_core::Error {
    nonmarginal_core::Error::NumericalFailure(format!("{e:#}"))
}

impl Ensemble for SimulatedEnsemble<'_> {
    fn evaluate(&mut self, beta: f64) -> nonmarginal_core::Result<FrequentistErrorReport> {
        frequentist_rates(&self.records(beta).map_err(to_core)?)
    }

    fn replicates(&self) -> usize {
        self.prepared.len()
    }

    fn widen(&mut self) -> nonmarginal_core::Result<bool> {
        let (more, failed) = prepare_range(self.cfg, self.ctx, self.ids, 2 * self.ids);
        self.prepared.extend(more);
        self.failed.extend(failed);
        self.ids *= 2;
        Ok(true)
    }
}
