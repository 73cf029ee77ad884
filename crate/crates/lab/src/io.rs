//! File formats. Every CSV is accompanied by a `<file>.meta.json` sidecar
//! naming its columns and provenance seed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nonmarginal_core::calibration::{BracketStep, CurvePoint};
use nonmarginal_core::hypotheses::{DecisionConfig, GroupStructure, TruthAssignment};
use nonmarginal_core::metrics::Estimate;
use nonmarginal_core::model::{CovariateDesign, Dataset, PosteriorDraws};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::replicate::{MethodOutcome, ReplicateOutcome, ReplicateSeeds};
use crate::run::{RunArtifacts, ScenarioReport, StageTiming};
use crate::scenario::ScenarioConfig;

pub fn bits_string(d: &DecisionConfig) -> String {
    d.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.trim()
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => bail!("unexpected character {other:?} in bit string"),
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_sidecar(path: &Path, description: &str, columns: &[String], extra: serde_json::Value) -> Result<()> {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    write_json(&sidecar_path(path), &json!({ "file": file, "description": description, "columns": columns, "meta": extra }))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// `t,x,z0..zm`.
pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let p = data.design.z.ncols();
    let mut header = vec!["t".to_string(), "x".to_string()];
    header.extend((0..p).map(|j| format!("z{j}")));
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for t in 0..data.n() {
        let mut row = vec![(t + 1).to_string(), fmt(data.x[t])];
        row.extend((0..p).map(|j| fmt(data.design.z[(t, j)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    write_sidecar(path, "simulated AR(1) series with its covariates", &header, json!({ "seed": data.seed }))
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.clone();
    ensure!(header.len() >= 3 && &header[0] == "t" && &header[1] == "x", "dataset header must start with t,x,z0");
    let p = header.len() - 2;
    let mut x = Vec::new();
    let mut z = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        x.push(rec[1].parse::<f64>()?);
        for j in 0..p {
            z.push(rec[2 + j].parse::<f64>()?);
        }
    }
    let n = x.len();
    let design = CovariateDesign::from_matrix(DMatrix::from_row_slice(n, p, &z))?;
    Ok(Dataset::new(x, design, 0)?)
}

/// `t,z0..zm`.
pub fn write_design_csv(path: &Path, design: &CovariateDesign) -> Result<()> {
    let p = design.z.ncols();
    let mut header = vec!["t".to_string()];
    header.extend((0..p).map(|j| format!("z{j}")));
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for t in 0..design.n() {
        let mut row = vec![(t + 1).to_string()];
        row.extend((0..p).map(|j| fmt(design.z[(t, j)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    write_sidecar(
        path,
        "covariate design; column z0 is the intercept",
        &header,
        json!({ "seed": design.seed, "generator": design.generator, "scale": design.scale, "centered": design.centered }),
    )
}

/// `rho,sigma2,beta0..betam`.
pub fn write_draws_csv(path: &Path, draws: &PosteriorDraws, seed: u64) -> Result<()> {
    let m = draws.num_covariates();
    let mut header = vec!["rho".to_string(), "sigma2".to_string()];
    header.extend((0..=m).map(|j| format!("beta{j}")));
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for row in draws.rows() {
        w.write_record(row.iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    write_sidecar(
        path,
        "posterior draws after burn-in and thinning",
        &header,
        json!({ "seed": seed, "burn_in": draws.burn_in, "thinning": draws.thinning }),
    )
}

pub fn read_draws_csv(path: &Path) -> Result<PosteriorDraws> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.clone();
    ensure!(header.len() >= 3 && &header[0] == "rho" && &header[1] == "sigma2", "draws header must start with rho,sigma2");
    let rows = r
        .records()
        .map(|rec| rec?.iter().map(|v| v.parse::<f64>().map_err(Into::into)).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDraws::from_rows(&rows, 0, 1)?)
}

/// One line per hypothesis: the 0-based members of `G_i`.
pub fn write_groups(path: &Path, g: &GroupStructure) -> Result<()> {
    let text: String = g
        .groups()
        .iter()
        .map(|grp| grp.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    write_sidecar(path, "dependency groups, line i lists the members of G_i", &[], json!({}))
}

pub fn read_groups(path: &Path) -> Result<GroupStructure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let groups = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|t| t.parse::<usize>().map_err(Into::into)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupStructure::new(groups)?)
}

/// A single line of `0`/`1` truth bits.
pub fn write_truth(path: &Path, t: &TruthAssignment) -> Result<()> {
    fs::write(path, bits_string(&t.d_t) + "\n")?;
    write_sidecar(path, "true configuration, 1 marks a true alternative", &[], json!({}))
}

pub fn read_truth(path: &Path) -> Result<TruthAssignment> {
    Ok(TruthAssignment::from_bits(parse_bits(&fs::read_to_string(path)?)?))
}

/// `d0..d{H-1},f_beta,beta,seed,component_sizes`.
pub fn write_decision_csv(path: &Path, d: &DecisionConfig, f_beta: f64, beta: f64, seed: u64, sizes: &[usize]) -> Result<()> {
    let mut header: Vec<String> = (0..d.len()).map(|i| format!("d{i}")).collect();
    header.extend(["f_beta", "beta", "seed", "component_sizes"].map(String::from));
    let mut w = writer(path)?;
    w.write_record(&header)?;
    let mut row: Vec<String> = d.bits.iter().map(|&b| u8::from(b).to_string()).collect();
    row.push(fmt(f_beta));
    row.push(fmt(beta));
    row.push(seed.to_string());
    row.push(sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "));
    w.write_record(&row)?;
    w.flush()?;
    write_sidecar(path, "optimal decision configuration", &header, json!({ "seed": seed }))
}

pub const REPLICATE_COLUMNS: [&str; 10] =
    ["replicate_id", "n", "beta", "d_hat_bits", "fdp", "fnp", "fdr_xn", "fnr_xn", "mfdr_xn", "mfnr_xn"];

fn replicate_row(id: usize, n: usize, o: &MethodOutcome) -> Vec<String> {
    let p = &o.posterior;
    vec![
        id.to_string(),
        n.to_string(),
        fmt(o.beta),
        bits_string(&o.d_hat),
        fmt(o.fdp),
        fmt(o.fnp),
        fmt(p.fdr_xn),
        fmt(p.fnr_xn),
        fmt(p.mfdr_xn),
        fmt(p.mfnr_xn),
    ]
}

/// Per-replicate CSV for one method.
pub fn write_replicates_csv(path: &Path, n: usize, method: &str, outcomes: &[ReplicateOutcome], master_seed: u64) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(REPLICATE_COLUMNS)?;
    for o in outcomes {
        let m = if method == "additive" { &o.additive } else { &o.nonmarginal };
        w.write_record(replicate_row(o.seeds.replicate_id, n, m))?;
    }
    w.flush()?;
    let cols: Vec<String> = REPLICATE_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_sidecar(path, &format!("per-replicate decisions and error rates, {method} rule"), &cols, json!({ "seed": master_seed, "n": n }))
}

pub const PLOT_COLUMNS: [&str; 6] = ["n", "m_n", "method", "metric", "value", "se"];

fn plot_rows(report: &ScenarioReport) -> Vec<[String; 6]> {
    let mut rows = Vec::new();
    for r in &report.per_n {
        let mut push = |method: &str, metric: &str, e: Option<Estimate>| {
            rows.push([
                r.n.to_string(),
                r.m_n.to_string(),
                method.to_string(),
                metric.to_string(),
                opt(e.map(|e| e.mean)),
                opt(e.map(|e| e.se)),
            ]);
        };
        for s in [&r.nonmarginal, &r.additive, &r.reject_all] {
            let f = &s.rates;
            for (name, e) in [
                ("pfdr", f.pfdr),
                ("pfnr", f.pfnr),
                ("pbfdr", f.pbfdr),
                ("pbfnr", f.pbfnr),
                ("mpbfdr", f.mpbfdr),
                ("mpbfnr", f.mpbfnr),
                ("consistency", Some(s.consistency)),
                ("mean_fdr_xn", Some(s.mean_posterior.fdr_xn)),
                ("mean_fnr_xn", Some(s.mean_posterior.fnr_xn)),
                ("mean_mfdr_xn", Some(s.mean_posterior.mfdr_xn)),
                ("mean_mfnr_xn", Some(s.mean_posterior.mfnr_xn)),
            ] {
                push(&s.method, name, e);
            }
        }
        if let Some(c) = r.calibration.as_ref().and_then(|c| c.result.as_ref()) {
            push("nonmarginal", "beta_hat", Some(Estimate { mean: c.beta_hat, se: c.beta_se.unwrap_or(f64::NAN), count: c.replicates }));
            push("nonmarginal", "calibrated_mpbfdr", Some(Estimate { mean: c.achieved, se: c.achieved_se, count: c.replicates }));
        }
    }
    rows
}

pub fn write_plot_csv(path: &Path, report: &ScenarioReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(PLOT_COLUMNS)?;
    for row in plot_rows(report) {
        w.write_record(&row)?;
    }
    w.flush()?;
    let cols: Vec<String> = PLOT_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_sidecar(path, "long-format metrics for plotting", &cols, json!({ "seed": report.master_seed }))
}

pub const TRACE_COLUMNS: [&str; 7] = ["iteration", "beta_lo", "beta_hi", "beta_mid", "mpbfdr", "se", "n_conditioning"];

pub fn write_trace_csv(path: &Path, trace: &[BracketStep], seed: u64) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRACE_COLUMNS)?;
    for s in trace {
        w.write_record([
            s.iteration.to_string(),
            fmt(s.beta_lo),
            fmt(s.beta_hi),
            fmt(s.beta_mid),
            opt(s.estimate),
            fmt(s.se),
            s.n_conditioning.to_string(),
        ])?;
    }
    w.flush()?;
    let cols: Vec<String> = TRACE_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_sidecar(path, "bisection trace of the beta calibration", &cols, json!({ "seed": seed }))
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint], seed: u64) -> Result<()> {
    let mut w = writer(path)?;
    let cols = ["beta", "mpbfdr", "se", "n_conditioning"];
    w.write_record(cols)?;
    for p in curve {
        w.write_record([fmt(p.beta), opt(p.estimate), fmt(p.se), p.n_conditioning.to_string()])?;
    }
    w.flush()?;
    let cols: Vec<String> = cols.iter().map(|s| s.to_string()).collect();
    write_sidecar(path, "mpBFDR against beta with common random numbers", &cols, json!({ "seed": seed }))
}

/// Deterministic record of a run: identical for identical configs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub scenario_hash: String,
    pub master_seed: u64,
    pub versions: serde_json::Value,
    pub replicate_seeds: Vec<ReplicateSeeds>,
    pub outputs: Vec<String>,
    /// Wall-clock per stage lives here, outside the manifest.
    pub timings_file: String,
}

/// Writes every artifact of a run into `dir` and returns the manifest.
pub fn write_outputs(dir: &Path, cfg: &ScenarioConfig, run: &RunArtifacts) -> Result<RunManifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let r = &run.report;
    let mut outputs = Vec::new();
    let mut out = |name: String| -> PathBuf {
        outputs.push(name.clone());
        dir.join(name)
    };
    write_json(&out("config.json".into()), cfg)?;
    write_json(&out("aggregate.json".into()), r)?;
    write_json(&out("rate_fits.json".into()), &json!({ "fits": r.fits, "fnr_control": r.fnr_control, "j_reference": r.j_reference }))?;
    write_plot_csv(&out("plot.csv".into()), r)?;
    for nr in &r.per_n {
        for method in ["nonmarginal", "additive"] {
            write_replicates_csv(&out(format!("replicates_n{}_{method}.csv", nr.n)), nr.n, method, &nr.outcomes, cfg.master_seed)?;
        }
        if !nr.curve.is_empty() {
            write_curve_csv(&out(format!("curve_n{}.csv", nr.n)), &nr.curve, cfg.master_seed)?;
        }
        if let Some(c) = nr.calibration.as_ref().and_then(|c| c.result.as_ref()) {
            write_trace_csv(&out(format!("calibration_n{}.csv", nr.n)), &c.trace, cfg.master_seed)?;
        }
    }
    write_timings(&dir.join("timings.json"), &run.timings)?;
    let manifest = RunManifest {
        scenario_hash: r.config_hash.clone(),
        master_seed: cfg.master_seed,
        versions: json!({ "nonmarginal-lab": env!("CARGO_PKG_VERSION") }),
        replicate_seeds: run.seeds.clone(),
        outputs,
        timings_file: "timings.json".into(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_timings(path: &Path, timings: &[StageTiming]) -> Result<()> {
    write_json(path, timings)
}
