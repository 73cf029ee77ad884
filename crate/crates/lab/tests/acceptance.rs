//! End-to-end acceptance run on the default scenario: one PASS/FAIL line per
//! criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nonmarginal_lab::checks;
use nonmarginal_lab::run::run_scenario;
use nonmarginal_lab::scenario::ScenarioConfig;

fn main() -> ExitCode {
    let start = Instant::now();
    let cfg = ScenarioConfig::default();
    let report = match run_scenario(&cfg) {
        Ok(run) => run.report,
        Err(e) => {
            println!("FAIL default scenario did not run: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let results = checks::run_all(&cfg, &report);
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} criteria passed in {:.1}s", results.len(), start.elapsed().as_secs_f64());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
