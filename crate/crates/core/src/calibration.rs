//! Feasible significance levels and calibration of `β` by bisection.
//!
//! The estimated `mpbfdr(β)` is non-increasing in `β` when every
//! evaluation reuses the same datasets and posterior draws, so bisection on
//! a fixed ensemble is sound at any replicate count.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{rate_fit, Estimate, FrequentistErrorReport, RateFit};

/// Open interval `(lo, hi)` of attainable levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleInterval {
    pub lo: f64,
    pub hi: f64,
}

impl FeasibleInterval {
    pub fn contains(&self, alpha: f64) -> bool {
        self.lo < alpha && alpha < self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

/// `(0, (1−q)/(1+p−q))` for the non-marginal rule.
pub fn feasible_alpha(p: f64, q: f64) -> Result<FeasibleInterval> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(invalid("p and q must lie in [0, 1]"));
    }
    let denom = 1.0 + p - q;
    if denom <= 0.0 {
        return Err(invalid("ceiling undefined for p = 0, q = 1"));
    }
    Ok(FeasibleInterval { lo: 0.0, hi: (1.0 - q) / denom })
}

/// `(0, p₀)` for the additive rule; empty when no null is true.
pub fn additive_feasible_alpha(p0: f64) -> Result<FeasibleInterval> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(invalid("p0 must lie in [0, 1]"));
    }
    Ok(FeasibleInterval { lo: 0.0, hi: p0 })
}

/// Which conditional rate is calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationObjective {
    #[default]
    Mpbfdr,
    Pbfdr,
}

impl CalibrationObjective {
    pub fn pick(&self, r: &FrequentistErrorReport) -> Option<Estimate> {
        match self {
            Self::Mpbfdr => r.mpbfdr,
            Self::Pbfdr => r.pbfdr,
        }
    }
}

/// A fixed set of replicates that can be decided at any `β`.
pub trait Ensemble {
    fn evaluate(&mut self, beta: f64) -> Result<FrequentistErrorReport>;

    fn replicates(&self) -> usize;

    /// Doubles the replicate budget; returns `false` if that is impossible.
    fn widen(&mut self) -> Result<bool>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub estimate: Option<f64>,
    pub se: f64,
    pub n_conditioning: usize,
}

fn point(beta: f64, r: &FrequentistErrorReport, objective: CalibrationObjective) -> CurvePoint {
    let e = objective.pick(r);
    CurvePoint { beta, estimate: e.map(|e| e.mean), se: e.map_or(0.0, |e| e.se), n_conditioning: r.n_conditioning_fdr }
}

/// `mpbfdr` at each grid point on the same ensemble.
pub fn mpbfdr_curve<E: Ensemble + ?Sized>(ensemble: &mut E, grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("beta grid must be strictly increasing"));
    }
    if grid.iter().any(|b| !(0.0..1.0).contains(b)) {
        return Err(invalid("beta grid must lie in [0, 1)"));
    }
    grid.iter()
        .map(|&b| Ok(point(b, &ensemble.evaluate(b)?, CalibrationObjective::Mpbfdr)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub target_alpha: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    #[serde(default)]
    pub objective: CalibrationObjective,
    /// Half-width used for the slope behind `beta_se`.
    #[serde(default = "default_slope_step")]
    pub slope_step: f64,
}

fn default_slope_step() -> f64 {
    0.02
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            target_alpha: 0.1,
            tolerance: 0.03,
            max_iterations: 30,
            objective: CalibrationObjective::Mpbfdr,
            slope_step: default_slope_step(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketStep {
    pub iteration: usize,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub beta_mid: f64,
    pub estimate: Option<f64>,
    pub se: f64,
    pub n_conditioning: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub target_alpha: f64,
    pub achieved: f64,
    pub achieved_se: f64,
    pub beta_hat: f64,
    /// Delta-method standard error from the local slope of the curve;
    /// `None` when the curve is flat around `beta_hat`.
    pub beta_se: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Replicates in the ensemble after any widening.
    pub replicates: usize,
    pub widened: bool,
    pub trace: Vec<BracketStep>,
}

enum Attempt {
    Done(CalibrationResult),
    Widen,
}

/// Bisection for `β` with `objective(β) ≈ α` on a fixed ensemble.
///
/// The budget is doubled once (and the search restarted) if an evaluation
/// has standard error above `tolerance / 2` or an empty conditioning event.
pub fn calibrate_beta<E: Ensemble + ?Sized>(ensemble: &mut E, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    if !(cfg.target_alpha > 0.0 && cfg.target_alpha < 1.0) {
        return Err(invalid("target alpha must lie in (0, 1)"));
    }
    if !(cfg.tolerance > 0.0) || cfg.max_iterations == 0 {
        return Err(invalid("tolerance and max_iterations must be positive"));
    }
    match bisect(ensemble, cfg, true)? {
        Attempt::Done(r) => Ok(r),
        Attempt::Widen => {
            let widened = ensemble.widen()?;
            match bisect(ensemble, cfg, false)? {
                Attempt::Done(mut r) => {
                    r.widened = widened;
                    Ok(r)
                }
                Attempt::Widen => unreachable!("bisect without widening always finishes"),
            }
        }
    }
}

fn bisect<E: Ensemble + ?Sized>(ensemble: &mut E, cfg: &CalibrationConfig, may_widen: bool) -> Result<Attempt> {
    let alpha = cfg.target_alpha;
    let tol = cfg.tolerance;
    let eval = |beta: f64, ens: &mut E| -> Result<(Option<Estimate>, usize)> {
        let r = ens.evaluate(beta)?;
        Ok((cfg.objective.pick(&r), r.n_conditioning_fdr))
    };
    let needs_widen = |e: &Option<Estimate>| may_widen && e.is_none_or(|e| e.se > tol / 2.0);

    let (e0, n0) = eval(0.0, ensemble)?;
    if needs_widen(&e0) {
        return Ok(Attempt::Widen);
    }
    let e0 = e0.ok_or_else(|| Error::Infeasible("no rejections at beta = 0".into()))?;
    let mut trace = alloc::vec![BracketStep {
        iteration: 0,
        beta_lo: 0.0,
        beta_hi: 1.0,
        beta_mid: 0.0,
        estimate: Some(e0.mean),
        se: e0.se,
        n_conditioning: n0,
    }];
    let finish = |beta_hat: f64, est: Estimate, iterations: usize, converged: bool, trace: Vec<BracketStep>, ens: &mut E| {
        let beta_se = delta_se(ens, cfg, beta_hat, est.se)?;
        Ok(Attempt::Done(CalibrationResult {
            target_alpha: alpha,
            achieved: est.mean,
            achieved_se: est.se,
            beta_hat,
            beta_se,
            iterations,
            converged,
            replicates: ens.replicates(),
            widened: false,
            trace,
        }))
    };
    if (e0.mean - alpha).abs() <= tol {
        return finish(0.0, e0, 0, true, trace, ensemble);
    }
    if e0.mean < alpha {
        return Err(Error::Infeasible(alloc::format!(
            "target {alpha} exceeds the attainable maximum {:.4}",
            e0.mean
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best: Option<(f64, Estimate)> = None;
    for it in 1..=cfg.max_iterations {
        let mid = 0.5 * (lo + hi);
        let (e, n) = eval(mid, ensemble)?;
        if needs_widen(&e) && e.is_some() {
            return Ok(Attempt::Widen);
        }
        trace.push(BracketStep {
            iteration: it,
            beta_lo: lo,
            beta_hi: hi,
            beta_mid: mid,
            estimate: e.map(|e| e.mean),
            se: e.map_or(0.0, |e| e.se),
            n_conditioning: n,
        });
        match e {
            Some(e) if (e.mean - alpha).abs() <= tol => return finish(mid, e, it, true, trace, ensemble),
            Some(e) => {
                if best.is_none_or(|(_, b)| (e.mean - alpha).abs() < (b.mean - alpha).abs()) {
                    best = Some((mid, e));
                }
                if e.mean > alpha {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            // an empty conditioning event counts as no false discoveries
            None => hi = mid,
        }
    }
    let (b, e) = best.unwrap_or((0.0, e0));
    finish(b, e, cfg.max_iterations, false, trace, ensemble)
}

fn delta_se<E: Ensemble + ?Sized>(ens: &mut E, cfg: &CalibrationConfig, beta: f64, se: f64) -> Result<Option<f64>> {
    let a = (beta - cfg.slope_step).max(0.0);
    let b = (beta + cfg.slope_step).min(1.0 - 1e-9);
    let ea = cfg.objective.pick(&ens.evaluate(a)?).map(|e| e.mean);
    let eb = cfg.objective.pick(&ens.evaluate(b)?).map_or(0.0, |e| e.mean);
    let Some(ea) = ea else { return Ok(None) };
    let slope = (eb - ea) / (b - a);
    Ok((slope < 0.0).then(|| se / -slope))
}

/// FNR behaviour under calibrated `β_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnrUnderControl {
    pub fit: RateFit,
    pub pbfnr: Vec<Option<f64>>,
    /// `pbfnr` at the largest `n` is below its value at the smallest `n`.
    pub decreasing: bool,
}

/// Decay fit of the conditional `fnr_xn` mean (pBFNR) across `n`, one report
/// per calibrated `n` in increasing order.
pub fn fnr_under_alpha_control(ns: &[usize], reports: &[FrequentistErrorReport], j: f64) -> Result<FnrUnderControl> {
    if ns.len() != reports.len() || ns.is_empty() {
        return Err(invalid("need one report per n"));
    }
    let pbfnr: Vec<Option<f64>> = reports.iter().map(|r| r.pbfnr.map(|e| e.mean)).collect();
    let values: Vec<f64> = pbfnr.iter().map(|v| v.unwrap_or(0.0)).collect();
    let fit = rate_fit("pbfnr", &values, ns, j)?;
    let decreasing = values[values.len() - 1] < values[0];
    Ok(FnrUnderControl { fit, pbfnr, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    /// `mpbfdr(β) = 0.6 (1 − β)` with a fixed standard error.
    struct Linear {
        se: f64,
        replicates: usize,
        calls: usize,
    }

    impl Ensemble for Linear {
        fn evaluate(&mut self, beta: f64) -> Result<FrequentistErrorReport> {
            self.calls += 1;
            let e = Some(Estimate { mean: 0.6 * (1.0 - beta), se: self.se, count: self.replicates });
            Ok(FrequentistErrorReport {
                pfdr: e,
                pfnr: e,
                pbfdr: e,
                pbfnr: e,
                mpbfdr: e,
                mpbfnr: e,
                n_replicates: self.replicates,
                n_conditioning_fdr: self.replicates,
                n_conditioning_fnr: self.replicates,
            })
        }

        fn replicates(&self) -> usize {
            self.replicates
        }

        fn widen(&mut self) -> Result<bool> {
            self.replicates *= 2;
            self.se /= core::f64::consts::SQRT_2;
            Ok(true)
        }
    }

    #[test]
    fn feasible_examples() {
        assert_eq!(feasible_alpha(0.5, 0.5).unwrap().hi, 0.5);
        assert!(feasible_alpha(0.3, 1.0).unwrap().hi.abs() < 1e-12);
        assert!((feasible_alpha(0.0, 0.4).unwrap().hi - 1.0).abs() < 1e-12);
        assert!(feasible_alpha(0.0, 1.0).is_err());
        assert!(feasible_alpha(0.5, 0.5).unwrap().contains(0.1));
        assert!(!feasible_alpha(0.5, 0.5).unwrap().contains(0.5));
    }

    #[test]
    fn ceiling_monotone_in_p_and_q() {
        for i in 0..20 {
            for j in 0..20 {
                let (p, q) = (i as f64 / 20.0, j as f64 / 21.0);
                let c = feasible_alpha(p, q).unwrap().hi;
                assert!((0.0..=1.0).contains(&c));
                assert!(feasible_alpha(p + 0.05, q).unwrap().hi <= c);
                assert!(feasible_alpha(p, q + 0.01).unwrap().hi <= c);
            }
        }
    }

    #[test]
    fn additive_interval() {
        assert_eq!(additive_feasible_alpha(0.5).unwrap().hi, 0.5);
        assert!(additive_feasible_alpha(0.0).unwrap().is_empty());
        assert!(additive_feasible_alpha(1.5).is_err());
    }

    #[test]
    fn synthetic_linear_oracle() {
        for &alpha in &[0.05, 0.1, 0.3, 0.5] {
            let mut ens = Linear { se: 1e-4, replicates: 200, calls: 0 };
            let cfg = CalibrationConfig { target_alpha: alpha, tolerance: 1e-3, ..Default::default() };
            let r = calibrate_beta(&mut ens, &cfg).unwrap();
            assert!(r.converged);
            assert!((r.beta_hat - (1.0 - alpha / 0.6)).abs() < 1e-3 / 0.6 + 1e-12);
            assert!((r.achieved - alpha).abs() <= 1e-3);
            assert!(!r.widened);
            let se = r.beta_se.unwrap();
            assert!((se - 1e-4 / 0.6).abs() < 1e-9);
            // bracket halves each iteration
            for w in r.trace[1..].windows(2) {
                assert!(((w[1].beta_hi - w[1].beta_lo) - 0.5 * (w[0].beta_hi - w[0].beta_lo)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn left_endpoint_shortcut() {
        let mut ens = Linear { se: 1e-4, replicates: 10, calls: 0 };
        let cfg = CalibrationConfig { target_alpha: 0.6, tolerance: 1e-3, ..Default::default() };
        let r = calibrate_beta(&mut ens, &cfg).unwrap();
        assert_eq!((r.beta_hat, r.iterations), (0.0, 0));
    }

    #[test]
    fn infeasible_target() {
        let mut ens = Linear { se: 1e-4, replicates: 10, calls: 0 };
        let cfg = CalibrationConfig { target_alpha: 0.8, tolerance: 1e-3, ..Default::default() };
        assert!(matches!(calibrate_beta(&mut ens, &cfg), Err(Error::Infeasible(_))));
    }

    #[test]
    fn noisy_ensemble_widened_once() {
        let mut ens = Linear { se: 0.01, replicates: 100, calls: 0 };
        let cfg = CalibrationConfig { target_alpha: 0.1, tolerance: 0.015, ..Default::default() };
        let r = calibrate_beta(&mut ens, &cfg).unwrap();
        assert!(r.widened);
        assert_eq!(r.replicates, 200);
    }

    #[test]
    fn iteration_cap() {
        let mut ens = Linear { se: 0.0, replicates: 10, calls: 0 };
        let cfg = CalibrationConfig { target_alpha: 0.1, tolerance: 1e-12, max_iterations: 5, ..Default::default() };
        let r = calibrate_beta(&mut ens, &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 5);
        assert_eq!(r.trace.len(), 6);
    }

    #[test]
    fn curve_on_linear_ensemble() {
        let mut ens = Linear { se: 0.0, replicates: 10, calls: 0 };
        let c = mpbfdr_curve(&mut ens, &[0.0, 0.2, 0.5, 0.8]).unwrap();
        assert_eq!(c[0].estimate, Some(0.6));
        assert!(c.windows(2).all(|w| w[0].estimate >= w[1].estimate));
        assert!(mpbfdr_curve(&mut ens, &[0.5, 0.2]).is_err());
    }

    #[test]
    fn fnr_fit_on_exponential() {
        let ns = [100, 200, 400, 800];
        let reports: Vec<FrequentistErrorReport> = ns
            .iter()
            .map(|&n| {
                let e = Some(Estimate { mean: libm::exp(-0.05 * n as f64), se: 0.0, count: 1 });
                FrequentistErrorReport {
                    pfdr: None,
                    pfnr: None,
                    pbfdr: None,
                    pbfnr: e,
                    mpbfdr: None,
                    mpbfnr: None,
                    n_replicates: 1,
                    n_conditioning_fdr: 0,
                    n_conditioning_fnr: 1,
                }
            })
            .collect();
        let f = fnr_under_alpha_control(&ns, &reports, 0.06).unwrap();
        assert!((f.fit.slope + 0.05).abs() < 1e-10);
        assert!(f.decreasing);
        assert!(fnr_under_alpha_control(&ns[..2], &reports, 0.06).is_err());
    }
}
