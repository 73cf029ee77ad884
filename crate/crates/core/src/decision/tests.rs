use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::hypotheses::{connected_components, DecisionConfig, GroupStructure, TestSpec};
use crate::model::PosteriorDraws;

fn rows(r: &[&[u8]]) -> PosteriorIndicators {
    let v: Vec<Vec<bool>> = r.iter().map(|row| row.iter().map(|&b| b == 1).collect()).collect();
    PosteriorIndicators::from_rows(&v).unwrap()
}

/// Random indicators with a shared latent so hypotheses co-vary.
fn random_instance(rng: &mut ChaCha8Rng, h: usize, s: usize, max_extra: usize) -> (PosteriorIndicators, GroupStructure) {
    let p: Vec<f64> = (0..h).map(|_| rng.random::<f64>()).collect();
    let data: Vec<Vec<bool>> = (0..s)
        .map(|_| {
            let u: f64 = rng.random();
            p.iter().map(|&pi| if rng.random::<f64>() < 0.5 { u < pi } else { rng.random::<f64>() < pi }).collect()
        })
        .collect();
    let groups: Vec<Vec<usize>> = (0..h)
        .map(|i| {
            let extra = rng.random_range(0..=max_extra);
            let mut g: Vec<usize> = (0..extra).map(|_| rng.random_range(0..h)).collect();
            g.push(i);
            g
        })
        .collect();
    (PosteriorIndicators::from_rows(&data).unwrap(), GroupStructure::new(groups).unwrap())
}

/// Global `2^H` enumeration straight from `joint_w`.
fn brute_force(ind: &PosteriorIndicators, g: &GroupStructure, beta: f64) -> (DecisionConfig, f64) {
    let h = ind.num_hypotheses();
    let s = ind.draws() as f64;
    let mut best: Option<(DecisionConfig, u64, usize)> = None;
    for mask in 0u64..(1 << h) {
        let d = DecisionConfig::from_mask(mask, h);
        let w = joint_w(ind, g, &d);
        let c: u64 = d.bits.iter().zip(&w).filter(|(b, _)| **b).map(|(_, w)| libm::round(w * s) as u64).sum();
        let k = d.rejections();
        let replace = match &best {
            None => true,
            Some((bd, bc, bk)) => {
                let lhs = c as f64 - *bc as f64;
                let rhs = beta * s * (k as f64 - *bk as f64);
                if k == *bk {
                    c > *bc || (c == *bc && d.bits < bd.bits)
                } else if lhs - rhs != 0.0 {
                    lhs > rhs
                } else {
                    k < *bk
                }
            }
        };
        if replace {
            best = Some((d, c, k));
        }
    }
    let (d, c, k) = best.unwrap();
    (d, c as f64 / s - beta * k as f64)
}

#[test]
fn indicator_regions() {
    let spec = TestSpec::new(1, true, 0.1);
    let draws = PosteriorDraws::from_rows(
        &[
            vec![0.99, 1.0, 0.0, 0.1],
            vec![-1.0, 1.0, 0.5, -0.1],
            vec![1.2, 1.0, -0.11, 0.0],
            vec![0.0, 2.0, 0.0, 0.3],
        ],
        0,
        1,
    )
    .unwrap();
    let ind = indicators(&draws, &spec).unwrap();
    let expect = [[false, false, false], [true, true, false], [true, true, false], [false, false, true]];
    for (s, row) in expect.iter().enumerate() {
        for (i, &b) in row.iter().enumerate() {
            assert_eq!(ind.get(s, i), b, "draw {s} hypothesis {i}");
        }
    }
    assert!(indicators(&draws, &TestSpec::new(2, true, 0.1)).is_err());
}

#[test]
fn marginal_examples() {
    let ind = rows(&[&[1, 1], &[1, 0], &[1, 1], &[1, 0]]);
    assert_eq!(marginal_v(&ind), vec![1.0, 0.5]);
    let permuted = rows(&[&[1, 0], &[1, 1], &[1, 0], &[1, 1]]);
    assert_eq!(marginal_v(&permuted), marginal_v(&ind));
}

#[test]
fn joint_examples() {
    let ind = rows(&[&[1, 1], &[1, 0], &[0, 1], &[1, 1]]);
    let g = GroupStructure::new(vec![vec![0, 1], vec![1]]).unwrap();
    let w = joint_w(&ind, &g, &DecisionConfig { bits: vec![false, true] });
    assert_eq!(w[0], 0.5);
    assert_eq!(w[1], 0.75);

    let single = GroupStructure::singletons(2);
    for mask in 0..4 {
        assert_eq!(joint_w(&ind, &single, &DecisionConfig::from_mask(mask, 2)), marginal_v(&ind));
    }
}

#[test]
fn joint_is_local() {
    let ind = rows(&[&[1, 1, 0], &[1, 0, 1], &[0, 1, 1], &[1, 1, 1]]);
    let g = GroupStructure::new(vec![vec![0, 1], vec![1], vec![2]]).unwrap();
    let a = joint_w(&ind, &g, &DecisionConfig { bits: vec![true, true, false] });
    let b = joint_w(&ind, &g, &DecisionConfig { bits: vec![true, true, true] });
    assert_eq!(a[0], b[0]);
}

#[test]
fn objective_examples() {
    // v = (0.9, 0.2) from 10 draws
    let data: Vec<Vec<bool>> = (0..10).map(|s| vec![s < 9, s < 2]).collect();
    let ind = PosteriorIndicators::from_rows(&data).unwrap();
    let g = GroupStructure::singletons(2);
    assert_eq!(objective_f(&DecisionConfig::zeros(2), &ind, &g, 0.5), 0.0);
    assert!((objective_f(&DecisionConfig { bits: vec![true, false] }, &ind, &g, 0.5) - 0.4).abs() < 1e-12);
    assert!((objective_f(&DecisionConfig::ones(2), &ind, &g, 0.5) - 0.1).abs() < 1e-12);

    let all = rows(&[&[1, 1, 1], &[1, 1, 1]]);
    assert_eq!(objective_f(&DecisionConfig::ones(3), &all, &GroupStructure::full(3), 0.0), 3.0);
}

#[test]
fn singleton_groups_reduce_to_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let (ind, _) = random_instance(&mut rng, 8, 200, 0);
        let g = GroupStructure::singletons(8);
        let comp = connected_components(&g);
        let v = marginal_v(&ind);
        for &beta in &[0.0, 0.25, 0.5, 0.9] {
            let d = optimize(&ind, &g, &comp, beta, &OptimizerConfig::default()).unwrap();
            assert_eq!(d, threshold_rule(&v, beta));
        }
    }
}

#[test]
fn two_hypothesis_full_group_matches_scan() {
    let ind = rows(&[&[1, 1], &[1, 0], &[0, 1], &[1, 1], &[0, 0], &[1, 1], &[0, 1], &[1, 0]]);
    let g = GroupStructure::full(2);
    let comp = connected_components(&g);
    let (d, f) = brute_force(&ind, &g, 0.3);
    let sol = DecisionProblem::new(&ind, &g, &comp).unwrap().solve(0.3, &OptimizerConfig::default()).unwrap();
    assert_eq!(sol.d, d);
    assert!((sol.f_beta - f).abs() < 1e-12);
    // hand scan: f(11) = 3/8 + 3/8 − 0.6 = 0.15, f(10) = 2/8 − 0.3, f(01) = 2/8 − 0.3
    assert_eq!(d.bits, vec![true, true]);
    assert!((f - 0.15).abs() < 1e-12);
}

#[test]
fn decomposition_matches_global_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..60 {
        let h = rng.random_range(1..=12);
        let (ind, g) = random_instance(&mut rng, h, 300, 2);
        let comp = connected_components(&g);
        let beta = [0.0, 0.1, 0.3, 0.5, 0.75][trial % 5];
        let (d, f) = brute_force(&ind, &g, beta);
        let sol = DecisionProblem::new(&ind, &g, &comp).unwrap().solve(beta, &OptimizerConfig::default()).unwrap();
        assert!((sol.f_beta - f).abs() < 1e-9, "trial {trial}");
        assert_eq!(sol.d, d, "trial {trial}");
        assert!((objective_f(&sol.d, &ind, &g, beta) - f).abs() < 1e-9);
    }
}

#[test]
fn annealing_matches_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut agree = 0;
    for seed in 0..100u64 {
        let (ind, g) = random_instance(&mut rng, 12, 400, 3);
        let comp = connected_components(&g);
        let p = DecisionProblem::new(&ind, &g, &comp).unwrap();
        let exact = p.solve(0.3, &OptimizerConfig::default()).unwrap();
        let cfg = OptimizerConfig { exact_component_limit: 1, seed, ..Default::default() };
        let annealed = p.solve(0.3, &cfg).unwrap();
        if (annealed.f_beta - exact.f_beta).abs() < 1e-12 {
            agree += 1;
        }
    }
    assert!(agree >= 99, "annealing agreed on {agree}/100");
}

#[test]
fn annealing_handles_wide_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (ind, _) = random_instance(&mut rng, 24, 500, 0);
    let g = GroupStructure::full(24);
    let comp = connected_components(&g);
    let p = DecisionProblem::new(&ind, &g, &comp).unwrap();
    let sol = p.solve(0.2, &OptimizerConfig::default()).unwrap();
    assert_eq!(sol.annealed, vec![0]);
    assert!((p.objective(&sol.d, 0.2) - objective_f(&sol.d, &ind, &g, 0.2)).abs() < 1e-12);
    assert!(sol.f_beta >= 0.0);
}

#[test]
fn solve_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (ind, g) = random_instance(&mut rng, 12, 300, 3);
    let comp = connected_components(&g);
    let p = DecisionProblem::new(&ind, &g, &comp).unwrap();
    let cfg = OptimizerConfig { exact_component_limit: 1, seed: 9, ..Default::default() };
    assert_eq!(p.solve(0.4, &cfg).unwrap(), p.solve(0.4, &cfg).unwrap());
}

#[test]
fn rejections_non_increasing_in_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let (ind, g) = random_instance(&mut rng, 10, 200, 2);
        let p = DecisionProblem::new(&ind, &g, &connected_components(&g)).unwrap();
        let counts: Vec<usize> = (0..10)
            .map(|k| p.solve(k as f64 / 10.0, &OptimizerConfig::default()).unwrap().d.rejections())
            .collect();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    }
}

#[test]
fn w_bounded_by_v_and_cached_w_matches() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..30 {
        let h = rng.random_range(2..=10);
        let (ind, g) = random_instance(&mut rng, h, 150, 4);
        let p = DecisionProblem::new(&ind, &g, &connected_components(&g)).unwrap();
        let v = marginal_v(&ind);
        for _ in 0..10 {
            let d = DecisionConfig::from_mask(rng.random::<u64>(), h);
            let w = joint_w(&ind, &g, &d);
            assert_eq!(p.w(&d), w);
            assert!(w.iter().zip(&v).all(|(w, v)| 0.0 <= *w && w <= v && *v <= 1.0));
        }
    }
}

#[test]
fn mismatched_components_rejected() {
    let ind = rows(&[&[1, 1], &[0, 1]]);
    let g = GroupStructure::full(2);
    let wrong = connected_components(&GroupStructure::singletons(2));
    assert!(DecisionProblem::new(&ind, &g, &wrong).is_err());
    let p = DecisionProblem::new(&ind, &g, &connected_components(&g)).unwrap();
    assert!(p.solve(1.0, &OptimizerConfig::default()).is_err());
    let bad = OptimizerConfig { exact_component_limit: 0, ..Default::default() };
    assert!(p.solve(0.5, &bad).is_err());
}

#[test]
fn additive_examples() {
    assert_eq!(beta_from_c(1.0), 0.5);
    assert_eq!(additive_rule(&[0.6, 0.4], 1.0).unwrap().bits, vec![true, false]);
    let c = 3.0;
    assert_eq!(additive_rule(&[beta_from_c(c)], c).unwrap().bits, vec![false]);
    let v = [0.0, 1.0 / 4000.0, 0.3];
    assert_eq!(additive_rule(&v, 1e-12).unwrap().bits, vec![false, true, true]);
    assert!(additive_rule(&v, 0.0).is_err());
    assert!((c_from_beta(beta_from_c(2.5)) - 2.5).abs() < 1e-12);
    assert_eq!(reject_all(3), DecisionConfig::ones(3));
}
