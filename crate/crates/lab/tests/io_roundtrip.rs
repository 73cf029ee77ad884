use nonmarginal_core::hypotheses::{DecisionConfig, GroupStructure, TruthAssignment};
use nonmarginal_core::model::{gibbs_sample, simulate};
use nonmarginal_lab::io::*;
use nonmarginal_lab::replicate::NContext;
use nonmarginal_lab::scenario::{SamplerSettings, ScenarioConfig};

#[test]
fn dataset_and_draws_round_trip() {
    let cfg = ScenarioConfig { sampler: SamplerSettings { draws: 50, burn_in: 10, thinning: 1 }, ..Default::default() };
    let ctx = NContext::new(&cfg, 120).unwrap();
    let data = simulate(&ctx.theta0, &ctx.design, 120, 5).unwrap();
    let draws = gibbs_sample(&data, &cfg.prior, &cfg.gibbs(6)).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let p = dir.path().join("dataset.csv");
    write_dataset_csv(&p, &data).unwrap();
    let back = read_dataset_csv(&p).unwrap();
    assert_eq!(back.x, data.x);
    assert_eq!(back.design.z, data.design.z);
    assert!(sidecar_path(&p).exists());

    let p = dir.path().join("draws.csv");
    write_draws_csv(&p, &draws, 6).unwrap();
    let back = read_draws_csv(&p).unwrap();
    assert_eq!(back.len(), draws.len());
    for s in 0..draws.len() {
        assert_eq!(back.row(s), draws.row(s));
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar_path(&p)).unwrap()).unwrap();
    assert_eq!(meta["columns"][0], "rho");
}

#[test]
fn groups_and_truth_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = GroupStructure::new(vec![vec![0], vec![1, 2], vec![2, 1], vec![3]]).unwrap();
    let p = dir.path().join("groups.txt");
    write_groups(&p, &g).unwrap();
    assert_eq!(read_groups(&p).unwrap(), g);

    let t = TruthAssignment::from_bits(vec![false, true, true, false]);
    let p = dir.path().join("truth.txt");
    write_truth(&p, &t).unwrap();
    assert_eq!(read_truth(&p).unwrap(), t);
}

#[test]
fn bit_strings() {
    let d = DecisionConfig { bits: vec![true, false, true] };
    assert_eq!(bits_string(&d), "101");
    assert_eq!(parse_bits(" 1 0 1\n").unwrap(), d.bits);
    assert!(parse_bits("102").is_err());
}

#[test]
fn decision_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("decision.csv");
    write_decision_csv(&p, &DecisionConfig { bits: vec![false, true] }, 0.4, 0.5, 9, &[1, 1]).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("d0,d1,f_beta,beta,seed,component_sizes"));
    assert_eq!(lines.next(), Some("0,1,0.4,0.5,9,1 1"));
}

#[test]
fn malformed_inputs_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "a,b,c\n1,2,3\n").unwrap();
    assert!(read_dataset_csv(&p).is_err());
    assert!(read_draws_csv(&p).is_err());
    std::fs::write(&p, "0 1\nx\n").unwrap();
    assert!(read_groups(&p).is_err());
}
