//! The acceptance criteria as executable checks over a scenario run.

use std::fmt;
use std::time::Instant;

use anyhow::Result;
use nonmarginal_core::decision::{joint_w, marginal_v, DecisionProblem, OptimizerConfig, PosteriorIndicators};
use nonmarginal_core::hypotheses::{connected_components, DecisionConfig, GroupStructure, TruthAssignment};
use nonmarginal_core::metrics::{frequentist_rates, posterior_rates, Estimate, PosteriorErrorReport, ReplicateRecord};
use nonmarginal_core::model::{
    generate_design, kl_rate_h, log_likelihood_ratio, quadratic_limits, simulate, Ar1Params,
};
use nonmarginal_core::seed::{derive_seed, rng_from, stream};
use rand::Rng;
use serde::Serialize;

use crate::run::{MethodSummary, ScenarioReport};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

fn outcome(id: u8, name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { id, name, passed, detail }
}

/// `later ≥ earlier − 2·se` for each consecutive pair.
fn non_decreasing_within(xs: &[Estimate]) -> bool {
    xs.windows(2).all(|w| w[1].mean >= w[0].mean - 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt())
}

fn non_increasing_within(xs: &[(f64, f64)]) -> bool {
    xs.windows(2).all(|w| w[1].0 <= w[0].0 + 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

/// Random indicator tables and groups for optimizer checks.
pub fn random_instance<R: Rng>(rng: &mut R, h: usize, draws: usize, max_extra: usize) -> (PosteriorIndicators, GroupStructure) {
    let p: Vec<f64> = (0..h).map(|_| rng.random()).collect();
    let rows: Vec<Vec<bool>> = (0..draws)
        .map(|_| {
            let u: f64 = rng.random();
            p.iter().map(|&pi| if rng.random::<bool>() { u < pi } else { rng.random::<f64>() < pi }).collect()
        })
        .collect();
    let groups = (0..h)
        .map(|i| {
            let k = rng.random_range(0..=max_extra);
            let mut g: Vec<usize> = (0..k).map(|_| rng.random_range(0..h)).collect();
            g.push(i);
            g
        })
        .collect();
    (PosteriorIndicators::from_rows(&rows).expect("non-empty"), GroupStructure::new(groups).expect("valid groups"))
}

/// Global `2^H` scan evaluating `f_β` directly from `joint_w`; ties within
/// `1e-12` go to fewer rejections, then the lexicographically smaller vector.
pub fn brute_force(ind: &PosteriorIndicators, g: &GroupStructure, beta: f64) -> (DecisionConfig, f64) {
    let h = ind.num_hypotheses();
    let mut best = (DecisionConfig::zeros(h), 0.0);
    for mask in 1u64..(1 << h) {
        let d = DecisionConfig::from_mask(mask, h);
        let w = joint_w(ind, g, &d);
        let f: f64 = d.bits.iter().zip(&w).filter(|(b, _)| **b).map(|(_, w)| w - beta).sum();
        let better = if (f - best.1).abs() <= 1e-12 {
            (d.rejections(), &d.bits) < (best.0.rejections(), &best.0.bits)
        } else {
            f > best.1
        };
        if better {
            best = (d, f);
        }
    }
    best
}

/// Criterion 1: component-decomposed optimizer against global enumeration.
pub fn oracle_equivalence(instances: usize, seed: u64) -> CheckOutcome {
    let start = Instant::now();
    let mut rng = rng_from(seed, &[0x6f72_6163]);
    let (mut same_f, mut same_d) = (0, 0);
    for _ in 0..instances {
        let h = rng.random_range(1..=12);
        let (ind, g) = random_instance(&mut rng, h, 200, 3);
        let beta = [0.0, 0.1, 0.25, 0.5, 0.8][rng.random_range(0..5)];
        let (d, f) = brute_force(&ind, &g, beta);
        let sol = DecisionProblem::new(&ind, &g, &connected_components(&g))
            .and_then(|p| p.solve(beta, &OptimizerConfig::default()));
        if let Ok(sol) = sol {
            same_f += usize::from((sol.f_beta - f).abs() < 1e-9);
            same_d += usize::from(sol.d == d);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = same_f == instances && same_d * 100 >= 99 * instances && secs < 60.0;
    outcome(
        1,
        "oracle equivalence",
        passed,
        format!("f_beta equal {same_f}/{instances}, configuration equal {same_d}/{instances}, {secs:.2}s"),
    )
}

fn consistency_line(report: &ScenarioReport, pick: fn(&crate::run::NReport) -> &MethodSummary) -> (bool, String) {
    let xs: Vec<Estimate> = report.per_n.iter().map(|r| pick(r).consistency).collect();
    let last = xs.last().map_or(0.0, |e| e.mean);
    let ok = non_decreasing_within(&xs) && last >= 0.95;
    let vals: Vec<String> = xs.iter().map(|e| format!("{:.3}", e.mean)).collect();
    (ok, vals.join(" "))
}

/// Criterion 2: fraction of replicates recovering the true configuration.
pub fn consistency(report: &ScenarioReport) -> CheckOutcome {
    let (a, va) = consistency_line(report, |r| &r.nonmarginal);
    let (b, vb) = consistency_line(report, |r| &r.additive);
    outcome(2, "consistency", a && b, format!("non-marginal [{va}], additive [{vb}]"))
}

/// Criterion 3: exponential decay of mean mfdr/mfnr and small tail rates.
pub fn error_decay(report: &ScenarioReport) -> CheckOutcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for f in &report.fits {
        match &f.fit {
            Some(fit) if !fit.degenerate => {
                let good = fit.slope < 0.0 && fit.r_squared >= 0.8;
                ok &= good;
                parts.push(format!(
                    "{} slope {:.3e} R2 {:.3} over n {:?}",
                    f.metric, fit.slope, fit.r_squared, fit.fitted_ns
                ));
            }
            Some(_) => {
                ok = false;
                parts.push(format!("{} identically zero", f.metric));
            }
            None => {
                ok = false;
                parts.push(format!("{} fit failed: {}", f.metric, f.error.as_deref().unwrap_or("?")));
            }
        }
    }
    if let Some(last) = report.per_n.last() {
        let r = &last.nonmarginal.rates;
        let tail = |e: Option<Estimate>| e.map(|e| e.mean);
        let (fdr, fnr) = (tail(r.mpbfdr), tail(r.mpbfnr));
        ok &= fdr.is_some_and(|v| v < 0.02) && fnr.is_some_and(|v| v < 0.02);
        parts.push(format!("at n={} mpbfdr {:?} mpbfnr {:?}", last.n, fdr, fnr));
    } else {
        ok = false;
    }
    outcome(3, "error decay", ok, parts.join("; "))
}

/// Three fixed alternatives around `θ₀` for the equipartition check.
pub fn equipartition_thetas(theta0: &Ar1Params) -> Vec<Ar1Params> {
    let mut b1 = theta0.beta.clone();
    b1[1] += 0.3;
    vec![
        Ar1Params { rho: theta0.rho + 0.1, ..theta0.clone() },
        Ar1Params { sigma2: theta0.sigma2 * 1.5, ..theta0.clone() },
        Ar1Params { rho: theta0.rho - 0.2, beta: b1, ..theta0.clone() },
    ]
}

/// Mean of `|(1/n) log R_n(θ) + h(θ)|` over `reps` datasets at each `n`.
pub fn equipartition_gaps(cfg: &ScenarioConfig, ns: &[usize], reps: usize) -> Result<Vec<Vec<f64>>> {
    let m = cfg.m_for(cfg.n_grid[0]);
    let theta0 = cfg.theta0(m)?;
    let thetas = equipartition_thetas(&theta0);
    let mut out = vec![vec![0.0; ns.len()]; thetas.len()];
    for (k, &n) in ns.iter().enumerate() {
        let design = generate_design(n, m, cfg.design.generator, cfg.design.scale, derive_seed(cfg.master_seed, &[stream::DESIGN, n as u64, 0xe9]))?;
        for rep in 0..reps {
            let data = simulate(&theta0, &design, n, derive_seed(cfg.master_seed, &[stream::NOISE, n as u64, 0xe9, rep as u64]))?;
            for (t, theta) in thetas.iter().enumerate() {
                let q = quadratic_limits(&theta.beta, &theta0.beta, &design)?;
                let h = kl_rate_h(theta, &theta0, &q)?;
                let lr = log_likelihood_ratio(theta, &theta0, &data)?;
                out[t][k] += (lr / n as f64 + h).abs() / reps as f64;
            }
        }
    }
    Ok(out)
}

/// Criterion 4: `(1/n) log R_n(θ) → −h(θ)`.
pub fn equipartition(cfg: &ScenarioConfig) -> CheckOutcome {
    match equipartition_gaps(cfg, &[250, 4000], 20) {
        Ok(gaps) => {
            let ok = gaps.iter().all(|g| g[1] < 0.05 && g[1] < g[0]);
            let detail = gaps.iter().map(|g| format!("{:.4} -> {:.4}", g[0], g[1])).collect::<Vec<_>>().join(", ");
            outcome(4, "equipartition", ok, format!("mean gap n=250 -> n=4000: {detail}"))
        }
        Err(e) => outcome(4, "equipartition", false, format!("{e:#}")),
    }
}

/// Criterion 5: `h(θ₀) = 0`, `J ≥ 0`, grid stability, decay slope sign.
pub fn h_and_j(cfg: &ScenarioConfig, report: &ScenarioReport) -> CheckOutcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let Some(last) = report.per_n.last() else {
        return outcome(5, "h and J sanity", false, "empty report".into());
    };
    let h0 = cfg.theta0(last.m_n).and_then(|t0| {
        let m = last.m_n;
        let design = generate_design(last.n, m, cfg.design.generator, cfg.design.scale, derive_seed(cfg.master_seed, &[stream::DESIGN, last.n as u64]))?;
        let q = quadratic_limits(&t0.beta, &t0.beta, &design)?;
        Ok(kl_rate_h(&t0, &t0, &q)?)
    });
    match h0 {
        Ok(h) => {
            ok &= h == 0.0;
            parts.push(format!("h(theta0) = {h}"));
        }
        Err(e) => {
            ok = false;
            parts.push(format!("h(theta0) failed: {e:#}"));
        }
    }
    for r in &report.per_n {
        match &r.j {
            Some(j) => {
                let diff = (j.j - j.j_refined).abs();
                ok &= j.j >= 0.0 && diff < 1e-4;
                parts.push(format!("n={} J {:.5} (refined diff {:.1e})", r.n, j.j, diff));
            }
            None => {
                ok = false;
                parts.push(format!("n={} J missing", r.n));
            }
        }
    }
    for f in report.fits.iter().filter_map(|f| f.fit.as_ref()) {
        ok &= f.slope <= 0.0;
        parts.push(format!("{} slope + J = {:.2e}", f.metric, f.bound_slack));
    }
    outcome(5, "h and J sanity", ok, parts.join("; "))
}

/// Criterion 6: calibrated mpBFDR near the target and `β̂(n)` non-increasing.
pub fn alpha_control(report: &ScenarioReport) -> CheckOutcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut betas = Vec::new();
    for r in &report.per_n {
        let Some(c) = &r.calibration else {
            ok = false;
            parts.push(format!("n={} not calibrated", r.n));
            continue;
        };
        match &c.result {
            Some(res) => {
                let within = (res.achieved - res.target_alpha).abs() <= 0.03;
                let feasible = r.feasible.contains(res.target_alpha);
                ok &= within && feasible && res.converged;
                betas.push((res.beta_hat, res.beta_se.unwrap_or(0.0)));
                parts.push(format!("n={} beta {:.4} mpbfdr {:.4}", r.n, res.beta_hat, res.achieved));
            }
            None => {
                ok = false;
                parts.push(format!("n={} failed: {}", r.n, c.error.as_deref().unwrap_or("?")));
            }
        }
    }
    let mono = non_increasing_within(&betas);
    ok &= mono;
    parts.push(format!("beta_hat non-increasing within 2 se: {mono}"));
    outcome(6, "alpha control", ok, parts.join("; "))
}

/// Criterion 7: rejecting everything gives pBFDR close to `m₀/H`.
pub fn additive_limit(report: &ScenarioReport) -> CheckOutcome {
    let Some(last) = report.per_n.last() else {
        return outcome(7, "additive beta=0 limit", false, "empty report".into());
    };
    let target = last.true_nulls as f64 / last.num_hypotheses as f64;
    match last.reject_all.rates.pbfdr {
        Some(e) => outcome(
            7,
            "additive beta=0 limit",
            (e.mean - target).abs() <= 0.05,
            format!("n={} pbfdr {:.4} vs m0/H {:.4}", last.n, e.mean, target),
        ),
        None => outcome(7, "additive beta=0 limit", false, "pbfdr undefined".into()),
    }
}

/// Criterion 8: the common-random-numbers curve never increases.
pub fn monotone_curve(report: &ScenarioReport) -> CheckOutcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &report.per_n {
        let vals: Vec<f64> = r.curve.iter().map(|p| p.estimate.unwrap_or(0.0)).collect();
        let mono = !vals.is_empty() && vals.windows(2).all(|w| w[1] <= w[0]);
        ok &= mono;
        parts.push(format!("n={} {}", r.n, if mono { "monotone" } else { "NOT monotone" }));
    }
    outcome(8, "monotone curve", ok, parts.join(", "))
}

/// Criterion 9: exact identities (antisymmetry, singleton `w = v`,
/// denominator guards) on reproducible random inputs.
pub fn exact_arithmetic(cfg: &ScenarioConfig) -> CheckOutcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;

    let anti = (|| -> Result<f64> {
        let m = cfg.m_for(cfg.n_grid[0]);
        let theta0 = cfg.theta0(m)?;
        let design = generate_design(500, m, cfg.design.generator, cfg.design.scale, 7)?;
        let data = simulate(&theta0, &design, 500, 8)?;
        let mut worst: f64 = 0.0;
        for th in equipartition_thetas(&theta0) {
            let a = log_likelihood_ratio(&th, &theta0, &data)?;
            let b = log_likelihood_ratio(&theta0, &th, &data)?;
            worst = worst.max((a + b).abs());
        }
        Ok(worst)
    })();
    match anti {
        Ok(w) => {
            ok &= w < 1e-10;
            parts.push(format!("antisymmetry {w:.1e}"));
        }
        Err(e) => {
            ok = false;
            parts.push(format!("antisymmetry failed: {e:#}"));
        }
    }

    let mut rng = rng_from(cfg.master_seed, &[0x6578_6163]);
    let mut singleton_ok = true;
    let mut guards_ok = true;
    for _ in 0..200 {
        let h = rng.random_range(1..=12);
        let (ind, _) = random_instance(&mut rng, h, 64, 0);
        let g = GroupStructure::singletons(h);
        let d = DecisionConfig::from_mask(rng.random(), h);
        let v = marginal_v(&ind);
        let w = joint_w(&ind, &g, &d);
        singleton_ok &= w == v;
        for dd in [DecisionConfig::zeros(h), DecisionConfig::ones(h), d] {
            let r: PosteriorErrorReport = posterior_rates(&v, &w, &dd).expect("same lengths");
            guards_ok &= [r.fdr_xn, r.fnr_xn, r.mfdr_xn, r.mfnr_xn].iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x));
        }
    }
    let empty = vec![
        ReplicateRecord {
            d_hat: DecisionConfig::zeros(3),
            truth: TruthAssignment::from_bits(vec![true, false, false]),
            posterior: posterior_rates(&[0.2, 0.1, 0.0], &[0.2, 0.1, 0.0], &DecisionConfig::zeros(3)).expect("same lengths"),
        };
        2
    ];
    let fr = frequentist_rates(&empty).expect("non-empty");
    guards_ok &= fr.pfdr.is_none() && fr.mpbfdr.is_none() && fr.pfnr.is_some();
    ok &= singleton_ok && guards_ok;
    parts.push(format!("singleton w=v {singleton_ok}, denominator guards {guards_ok}"));

    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    parts.push(format!("{secs:.2}s"));
    outcome(9, "exact arithmetic", ok, parts.join("; "))
}

/// Runs every criterion on a finished scenario report.
pub fn run_all(cfg: &ScenarioConfig, report: &ScenarioReport) -> Vec<CheckOutcome> {
    vec![
        oracle_equivalence(100, cfg.master_seed),
        consistency(report),
        error_decay(report),
        equipartition(cfg),
        h_and_j(cfg, report),
        alpha_control(report),
        additive_limit(report),
        monotone_curve(report),
        exact_arithmetic(cfg),
    ]
}
