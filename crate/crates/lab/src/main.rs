use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nonmarginal_core::decision::{beta_from_c, indicators, threshold_rule, DecisionProblem};
use nonmarginal_core::hypotheses::{connected_components, GroupStructure};
use nonmarginal_core::model::{gibbs_sample, simulate};
use nonmarginal_core::seed::{derive_seed, stream};
use nonmarginal_lab::checks::{self, CheckOutcome};
use nonmarginal_lab::io;
use nonmarginal_lab::replicate::{run_replicate, NContext, ReplicateSeeds};
use nonmarginal_lab::run::{j_summary, run_scenario, run_scenario_with, Stages};
use nonmarginal_lab::scenario::ScenarioConfig;
use serde_json::json;

#[derive(Parser)]
#[command(name = "nonmarginal", version, about = "Joint multiple testing for AR(1) models with covariates")]
struct Cli {
    /// Scenario config (JSON). Missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one dataset, sample its posterior and write the inputs of `decide`.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        id: usize,
    },
    /// Decide from posterior draws or from a dataset.
    Decide(DecideArgs),
    /// Run a single replicate and print its outcome.
    Replicate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        id: usize,
    },
    /// Calibrate beta at each n of the grid.
    Calibrate,
    /// Run the full grid and write rates, fits and plot data.
    Rates {
        /// Also run the acceptance checks; exit 1 if any fails.
        #[arg(long)]
        check: bool,
    },
    /// Estimate the KL rate J at each n of the grid.
    JEstimate,
    /// Run the full grid followed by the acceptance checks.
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Nonmarginal,
    Additive,
}

#[derive(Args)]
struct DecideArgs {
    /// Posterior draws CSV (`rho,sigma2,beta0..`).
    #[arg(long, conflicts_with = "dataset")]
    draws: Option<PathBuf>,
    /// Dataset CSV (`t,x,z0..`); the posterior is sampled first.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Group file; singleton groups when absent.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long, conflicts_with = "c")]
    beta: Option<f64>,
    /// Additive penalty; converted with beta = c/(1+c).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, value_enum, default_value = "nonmarginal")]
    rule: Rule,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli)?;
    if cli.print_config {
        println!("{}", cfg.to_json());
        return Ok(true);
    }
    if let Some(w) = cli.workers {
        ensure!(w >= 1, "--workers must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().context("configuring worker pool")?;
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let out = cli.out.as_path();
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    match command {
        Command::Simulate { n, id } => simulate_cmd(&cfg, out, n, id).map(|_| true),
        Command::Decide(args) => decide_cmd(&cfg, out, &args).map(|_| true),
        Command::Replicate { n, id } => {
            let ctx = NContext::new(&cfg, n)?;
            let r = run_replicate(&cfg, &ctx, id)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(true)
        }
        Command::Calibrate => {
            let mut cfg = cfg;
            cfg.calibration.get_or_insert_with(Default::default);
            let run = run_scenario_with(&cfg, Stages { curve: false, calibration: true, j: false })?;
            io::write_outputs(out, &cfg, &run)?;
            for r in &run.report.per_n {
                match r.calibration.as_ref().and_then(|c| c.result.as_ref()) {
                    Some(c) => println!(
                        "n={} beta_hat={:.4} mpbfdr={:.4} converged={}",
                        r.n, c.beta_hat, c.achieved, c.converged
                    ),
                    None => println!("n={} calibration failed", r.n),
                }
            }
            Ok(true)
        }
        Command::Rates { check } => {
            let run = run_scenario(&cfg)?;
            io::write_outputs(out, &cfg, &run)?;
            for f in &run.report.fits {
                println!("{}", serde_json::to_string(f)?);
            }
            if check {
                Ok(report_checks(out, &checks::run_all(&cfg, &run.report))?)
            } else {
                Ok(true)
            }
        }
        Command::JEstimate => {
            let mut rows = Vec::new();
            for &n in &cfg.n_grid {
                let ctx = NContext::new(&cfg, n)?;
                let j = j_summary(&ctx, &cfg.j_search)?;
                println!("n={n} J={:.6} refined={:.6} hypothesis={}", j.j, j.j_refined, j.hypothesis);
                rows.push(json!({ "n": n, "j": j }));
            }
            std::fs::create_dir_all(out)?;
            io::write_json(&out.join("j_estimate.json"), &rows)?;
            Ok(true)
        }
        Command::Check => {
            let run = run_scenario(&cfg)?;
            io::write_outputs(out, &cfg, &run)?;
            report_checks(out, &checks::run_all(&cfg, &run.report))
        }
    }
}

fn report_checks(out: &Path, results: &[CheckOutcome]) -> Result<bool> {
    for r in results {
        println!("{r}");
    }
    io::write_json(&out.join("checks.json"), results)?;
    Ok(results.iter().all(|r| r.passed))
}

fn simulate_cmd(cfg: &ScenarioConfig, out: &Path, n: usize, id: usize) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let ctx = NContext::new(cfg, n)?;
    let seeds = ReplicateSeeds::derive(cfg.master_seed, n, id);
    let data = simulate(&ctx.theta0, &ctx.design, n, seeds.noise)?;
    let draws = gibbs_sample(&data, &cfg.prior, &cfg.gibbs(seeds.gibbs))?;
    io::write_design_csv(&out.join("design.csv"), &ctx.design)?;
    io::write_dataset_csv(&out.join("dataset.csv"), &data)?;
    io::write_draws_csv(&out.join("draws.csv"), &draws, seeds.gibbs)?;
    io::write_groups(&out.join("groups.txt"), &ctx.groups)?;
    io::write_truth(&out.join("truth.txt"), &ctx.truth)?;
    println!("wrote design, dataset, draws, groups and truth for n={n} replicate {id} to {}", out.display());
    Ok(())
}

fn decide_cmd(cfg: &ScenarioConfig, out: &Path, args: &DecideArgs) -> Result<()> {
    let beta = match (args.beta, args.c) {
        (Some(b), None) => b,
        (None, Some(c)) => {
            ensure!(c > 0.0, "--c must be positive");
            beta_from_c(c)
        }
        (None, None) => cfg.decision.beta,
        (Some(_), Some(_)) => unreachable!("clap rejects --beta with --c"),
    };
    ensure!((0.0..1.0).contains(&beta), "beta must lie in [0, 1)");
    let (draws, seed) = match (&args.draws, &args.dataset) {
        (Some(p), _) => (io::read_draws_csv(p)?, cfg.master_seed),
        (None, Some(p)) => {
            let data = io::read_dataset_csv(p)?;
            let seed = derive_seed(cfg.master_seed, &[stream::GIBBS, data.n() as u64]);
            (gibbs_sample(&data, &cfg.prior, &cfg.gibbs(seed))?, seed)
        }
        (None, None) => bail!("decide needs --draws or --dataset"),
    };
    let spec = cfg.test_spec(draws.num_covariates());
    spec.validate()?;
    let ind = indicators(&draws, &spec)?;
    let groups = match &args.groups {
        Some(p) => io::read_groups(p)?,
        None => GroupStructure::singletons(spec.num_hypotheses()),
    };
    ensure!(groups.len() == spec.num_hypotheses(), "group file has {} groups, expected {}", groups.len(), spec.num_hypotheses());
    let comp = connected_components(&groups);
    let problem = DecisionProblem::new(&ind, &groups, &comp)?;
    let opt = nonmarginal_core::decision::OptimizerConfig { seed, ..cfg.decision.optimizer };
    let (d, f) = match args.rule {
        Rule::Nonmarginal => {
            let sol = problem.solve(beta, &opt)?;
            (sol.d, sol.f_beta)
        }
        Rule::Additive => {
            let d = threshold_rule(&problem.v(), beta);
            let f = problem.objective(&d, beta);
            (d, f)
        }
    };
    std::fs::create_dir_all(out)?;
    io::write_decision_csv(&out.join("decision.csv"), &d, f, beta, seed, &comp.sizes())?;
    println!("{} f_beta={f:.6} beta={beta}", io::bits_string(&d));
    Ok(())
}
