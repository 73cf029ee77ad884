//! The hypothesis family, truth assignments, dependency groups and decision
//! configurations.
//!
//! Hypothesis 0 is the `ρ` test (`H₀: |ρ| < bound`) when it is included;
//! covariate coefficient `β_i` (with `β_0` the intercept) follows at index
//! `i + 1`, or at `i` without the `ρ` test.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{Ar1Params, CovariateDesign};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub num_covariates: usize,
    pub include_rho_test: bool,
    /// Half-width `ε₀` of the null neighbourhood of zero for each `β_i`.
    pub null_radius: f64,
    #[serde(default = "default_rho_bound")]
    pub rho_null_bound: f64,
}

fn default_rho_bound() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisKind {
    Rho,
    /// Coefficient index (0 = intercept).
    Beta(usize),
}

impl TestSpec {
    pub fn new(num_covariates: usize, include_rho_test: bool, null_radius: f64) -> Self {
        Self { num_covariates, include_rho_test, null_radius, rho_null_bound: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.null_radius > 0.0) || !self.null_radius.is_finite() {
            return Err(invalid("null_radius must be positive"));
        }
        if !(self.rho_null_bound > 0.0) {
            return Err(invalid("rho_null_bound must be positive"));
        }
        Ok(())
    }

    /// Total number of hypotheses `H`.
    pub fn num_hypotheses(&self) -> usize {
        usize::from(self.include_rho_test) + self.num_covariates + 1
    }

    pub fn beta_index(&self, coef: usize) -> usize {
        coef + usize::from(self.include_rho_test)
    }

    pub fn kind(&self, hyp: usize) -> HypothesisKind {
        match (self.include_rho_test, hyp) {
            (true, 0) => HypothesisKind::Rho,
            (true, h) => HypothesisKind::Beta(h - 1),
            (false, h) => HypothesisKind::Beta(h),
        }
    }

    /// Alternative region membership for `ρ`.
    #[inline]
    pub fn rho_alternative(&self, rho: f64) -> bool {
        libm::fabs(rho) >= self.rho_null_bound
    }

    /// Alternative region membership for a coefficient; `|β| = ε₀` is null.
    #[inline]
    pub fn beta_alternative(&self, beta: f64) -> bool {
        libm::fabs(beta) > self.null_radius
    }
}

/// `d_i = true` rejects `H₀ᵢ`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DecisionConfig {
    pub bits: Vec<bool>,
}

impl DecisionConfig {
    pub fn zeros(h: usize) -> Self {
        Self { bits: vec![false; h] }
    }

    pub fn ones(h: usize) -> Self {
        Self { bits: vec![true; h] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn rejections(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn from_mask(mask: u64, h: usize) -> Self {
        Self { bits: (0..h).map(|i| mask >> i & 1 == 1).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthAssignment {
    /// `r_i = true` iff `H₁ᵢ` holds under `θ₀`.
    pub r: Vec<bool>,
    /// The KL-minimising configuration; equal to `r` because the model
    /// class contains the truth.
    pub d_t: DecisionConfig,
}

impl TruthAssignment {
    pub fn from_bits(r: Vec<bool>) -> Self {
        let d_t = DecisionConfig { bits: r.clone() };
        Self { r, d_t }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn true_nulls(&self) -> usize {
        self.r.iter().filter(|b| !**b).count()
    }
}

pub fn truth_from_params(theta0: &Ar1Params, spec: &TestSpec) -> Result<TruthAssignment> {
    spec.validate()?;
    if theta0.beta.len() != spec.num_covariates + 1 {
        return Err(invalid("truth has the wrong number of coefficients"));
    }
    let r = (0..spec.num_hypotheses())
        .map(|h| match spec.kind(h) {
            HypothesisKind::Rho => spec.rho_alternative(theta0.rho),
            HypothesisKind::Beta(i) => spec.beta_alternative(theta0.beta[i]),
        })
        .collect();
    Ok(TruthAssignment::from_bits(r))
}

/// `groups[i] = G_i`, always containing `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
}

impl GroupStructure {
    /// Validates and normalises (sorted, deduplicated) the member lists.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let h = groups.len();
        let mut out = Vec::with_capacity(h);
        for (i, g) in groups.into_iter().enumerate() {
            let set: BTreeSet<usize> = g.into_iter().collect();
            if !set.contains(&i) {
                return Err(invalid(alloc::format!("group {i} does not contain its own hypothesis")));
            }
            if set.iter().any(|&j| j >= h) {
                return Err(invalid(alloc::format!("group {i} references a hypothesis >= {h}")));
            }
            out.push(set.into_iter().collect());
        }
        Ok(Self { groups: out })
    }

    pub fn singletons(h: usize) -> Self {
        Self { groups: (0..h).map(|i| vec![i]).collect() }
    }

    /// Every group is the full index set.
    pub fn full(h: usize) -> Self {
        Self { groups: vec![(0..h).collect(); h] }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn is_singleton(&self, i: usize) -> bool {
        self.groups[i].len() == 1
    }
}

/// Disjoint components of the dependency graph, ordered by smallest member.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentPartition {
    pub components: Vec<Vec<usize>>,
    pub component_of: Vec<usize>,
}

impl ComponentPartition {
    pub fn sizes(&self) -> Vec<usize> {
        self.components.iter().map(Vec::len).collect()
    }
}

/// Builds `G_i` from absolute empirical correlations between design columns.
///
/// The `ρ` hypothesis is a singleton; covariate groups keep the
/// `max_group_size` members with the largest `|corr|` (ties by index).
pub fn build_groups(
    design: &CovariateDesign,
    spec: &TestSpec,
    threshold: f64,
    max_group_size: usize,
) -> Result<GroupStructure> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(invalid("correlation threshold must lie in [0, 1]"));
    }
    if max_group_size == 0 {
        return Err(invalid("max_group_size must be positive"));
    }
    if design.m() != spec.num_covariates {
        return Err(invalid("design does not match the test spec"));
    }
    let p = design.z.ncols();
    let mut corr = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in (a + 1)..p {
            let c = libm::fabs(crate::model::column_correlation(&design.z, a, b));
            corr[a][b] = c;
            corr[b][a] = c;
        }
    }
    let mut groups = vec![Vec::new(); spec.num_hypotheses()];
    if spec.include_rho_test {
        groups[0] = vec![0];
    }
    for a in 0..p {
        let mut cands: Vec<(f64, usize)> =
            (0..p).filter(|&b| b != a && corr[a][b] >= threshold).map(|b| (corr[a][b], b)).collect();
        cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        cands.truncate(max_group_size - 1);
        let mut g: Vec<usize> = cands.into_iter().map(|(_, b)| spec.beta_index(b)).collect();
        g.push(spec.beta_index(a));
        groups[spec.beta_index(a)] = g;
    }
    GroupStructure::new(groups)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so roots stay the minimal member
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Components of the graph with edges `{(i, j) : j ∈ G_i}`.
pub fn connected_components(g: &GroupStructure) -> ComponentPartition {
    let h = g.len();
    let mut uf = UnionFind::new(h);
    for i in 0..h {
        for &j in g.group(i) {
            uf.union(i, j);
        }
    }
    let mut root_to_comp = vec![usize::MAX; h];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut component_of = vec![0; h];
    for i in 0..h {
        let r = uf.find(i);
        if root_to_comp[r] == usize::MAX {
            root_to_comp[r] = components.len();
            components.push(Vec::new());
        }
        component_of[i] = root_to_comp[r];
        components[root_to_comp[r]].push(i);
    }
    ComponentPartition { components, component_of }
}

/// Proportions used by the α-control results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthProportions {
    /// Fraction of true alternatives.
    pub p: f64,
    /// Fraction of groups containing at least one false null.
    pub q: f64,
    /// Fraction of true nulls.
    pub p0: f64,
    /// `(1 − q) / (1 + p − q)`: the largest asymptotically attainable mpBFDR.
    pub fdr_ceiling: f64,
}

pub fn truth_proportions(g: &GroupStructure, t: &TruthAssignment) -> Result<TruthProportions> {
    if g.len() != t.len() {
        return Err(invalid("groups and truth disagree on H"));
    }
    let h = t.len() as f64;
    let p = t.d_t.rejections() as f64 / h;
    let q = g.groups().iter().filter(|grp| grp.iter().any(|&j| t.r[j])).count() as f64 / h;
    let p0 = t.true_nulls() as f64 / h;
    Ok(TruthProportions { p, q, p0, fdr_ceiling: (1.0 - q) / (1.0 + p - q) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_design, DesignGenerator};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn spec(m: usize) -> TestSpec {
        TestSpec::new(m, true, 0.1)
    }

    #[test]
    fn truth_examples() {
        let s = spec(2);
        let t = truth_from_params(&Ar1Params::new(0.5, 1.0, vec![0.0, 1.5, 0.05]).unwrap(), &s).unwrap();
        assert_eq!(t.r, vec![false, false, true, false]);
        assert_eq!(t.d_t.bits, t.r);

        let s3 = spec(3);
        let t = truth_from_params(&Ar1Params::new(1.2, 1.0, vec![0.0; 4]).unwrap(), &s3).unwrap();
        assert_eq!(t.r, vec![true, false, false, false, false]);

        let t = truth_from_params(&Ar1Params::new(0.5, 1.0, vec![0.0, 0.1, -0.1]).unwrap(), &s).unwrap();
        assert_eq!(t.r, vec![false, false, false, false]);
    }

    #[test]
    fn truth_dimension_mismatch() {
        assert!(truth_from_params(&Ar1Params::new(0.5, 1.0, vec![0.0, 1.0]).unwrap(), &spec(3)).is_err());
    }

    #[test]
    fn index_mapping() {
        let s = spec(3);
        assert_eq!(s.num_hypotheses(), 5);
        assert_eq!(s.kind(0), HypothesisKind::Rho);
        assert_eq!(s.kind(1), HypothesisKind::Beta(0));
        assert_eq!(s.beta_index(2), 3);
        let no_rho = TestSpec::new(3, false, 0.1);
        assert_eq!(no_rho.num_hypotheses(), 4);
        assert_eq!(no_rho.kind(0), HypothesisKind::Beta(0));
    }

    #[test]
    fn groups_threshold_one_are_singletons() {
        let d = generate_design(100, 5, DesignGenerator::IidGaussianBounded, 1.0, 1).unwrap();
        let g = build_groups(&d, &spec(5), 1.0, 5).unwrap();
        assert_eq!(g, GroupStructure::singletons(7));
    }

    #[test]
    fn groups_threshold_zero_are_full_up_to_cap() {
        let d = generate_design(100, 3, DesignGenerator::IidGaussianBounded, 1.0, 1).unwrap();
        let g = build_groups(&d, &spec(3), 0.0, 10).unwrap();
        assert_eq!(g.group(0), &[0]);
        for i in 1..5 {
            assert_eq!(g.group(i), &[1, 2, 3, 4]);
        }
        let capped = build_groups(&d, &spec(3), 0.0, 2).unwrap();
        for i in 1..5 {
            assert_eq!(capped.group(i).len(), 2);
            assert!(capped.group(i).contains(&i));
        }
    }

    #[test]
    fn duplicated_columns_group_together() {
        let base = generate_design(60, 3, DesignGenerator::IidGaussianBounded, 1.0, 4).unwrap();
        let mut z: DMatrix<f64> = base.z.clone();
        let col1 = z.column(1).into_owned();
        z.set_column(2, &col1);
        let d = CovariateDesign::from_matrix(z).unwrap();
        let s = spec(3);
        assert!(libm::fabs(crate::model::column_correlation(&d.z, 1, 2) - 1.0) < 1e-12);
        let g = build_groups(&d, &s, 0.9, 5).unwrap();
        // covariates 1 and 2 live at hypotheses 2 and 3
        assert!(g.group(2).contains(&3));
        assert!(g.group(3).contains(&2));
    }

    #[test]
    fn groups_reject_bad_threshold() {
        let d = generate_design(30, 2, DesignGenerator::IidGaussianBounded, 1.0, 1).unwrap();
        assert!(build_groups(&d, &spec(2), 1.5, 5).is_err());
        assert!(build_groups(&d, &spec(2), -0.1, 5).is_err());
    }

    #[test]
    fn group_structure_validation() {
        assert!(GroupStructure::new(vec![vec![1], vec![1]]).is_err());
        assert!(GroupStructure::new(vec![vec![0, 2], vec![1]]).is_err());
    }

    #[test]
    fn component_examples() {
        let p = connected_components(&GroupStructure::singletons(4));
        assert_eq!(p.components.len(), 4);

        let g = GroupStructure::new(vec![vec![0], vec![1, 2], vec![2], vec![3]]).unwrap();
        let p = connected_components(&g);
        assert_eq!(p.components, vec![vec![0], vec![1, 2], vec![3]]);

        let k = 6;
        let chain: Vec<Vec<usize>> = (0..k).map(|i| if i + 1 < k { vec![i, i + 1] } else { vec![i] }).collect();
        let p = connected_components(&GroupStructure::new(chain).unwrap());
        assert_eq!(p.components.len(), 1);
        assert_eq!(p.component_of, vec![0; k]);
    }

    #[test]
    fn proportion_examples() {
        let t = TruthAssignment::from_bits(vec![false, true, true, false]);
        let pr = truth_proportions(&GroupStructure::singletons(4), &t).unwrap();
        assert_eq!((pr.p, pr.q, pr.p0, pr.fdr_ceiling), (0.5, 0.5, 0.5, 0.5));

        let t = TruthAssignment::from_bits(vec![false; 5]);
        let pr = truth_proportions(&GroupStructure::singletons(5), &t).unwrap();
        assert_eq!((pr.p, pr.q, pr.p0, pr.fdr_ceiling), (0.0, 0.0, 1.0, 1.0));
    }

    fn arb_groups() -> impl Strategy<Value = GroupStructure> {
        (1usize..10).prop_flat_map(|h| {
            proptest::collection::vec(proptest::collection::vec(0..h, 0..4), h).prop_map(move |raw| {
                let gs = raw
                    .into_iter()
                    .enumerate()
                    .map(|(i, mut g)| {
                        g.push(i);
                        g
                    })
                    .collect();
                GroupStructure::new(gs).unwrap()
            })
        })
    }

    fn brute_connected(g: &GroupStructure, a: usize, b: usize) -> bool {
        let h = g.len();
        let mut reach = vec![false; h];
        reach[a] = true;
        loop {
            let mut changed = false;
            for i in 0..h {
                for &j in g.group(i) {
                    if reach[i] != reach[j] {
                        reach[i] = true;
                        reach[j] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                return reach[b];
            }
        }
    }

    proptest! {
        #[test]
        fn components_partition_and_connectivity(g in arb_groups()) {
            let p = connected_components(&g);
            let mut seen = vec![0usize; g.len()];
            for (c, comp) in p.components.iter().enumerate() {
                for &i in comp {
                    seen[i] += 1;
                    prop_assert_eq!(p.component_of[i], c);
                }
            }
            prop_assert!(seen.iter().all(|&k| k == 1));
            for a in 0..g.len() {
                for b in 0..g.len() {
                    prop_assert_eq!(p.component_of[a] == p.component_of[b], brute_connected(&g, a, b));
                }
            }
            // ordered by smallest member
            let mins: Vec<usize> = p.components.iter().map(|c| c[0]).collect();
            prop_assert!(mins.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn components_ignore_member_order(g in arb_groups()) {
            let reversed: Vec<Vec<usize>> = g.groups().iter().map(|v| v.iter().rev().copied().collect()).collect();
            let g2 = GroupStructure::new(reversed).unwrap();
            prop_assert_eq!(connected_components(&g), connected_components(&g2));
            // a component's members as groups reproduce the same partition
            let p = connected_components(&g);
            let as_groups: Vec<Vec<usize>> = (0..g.len()).map(|i| p.components[p.component_of[i]].clone()).collect();
            prop_assert_eq!(connected_components(&GroupStructure::new(as_groups).unwrap()), p);
        }

        #[test]
        fn ceiling_in_unit_interval(g in arb_groups(), seed in any::<u64>()) {
            let r: Vec<bool> = (0..g.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            let t = TruthAssignment::from_bits(r);
            let pr = truth_proportions(&g, &t).unwrap();
            prop_assert!(pr.q >= pr.p - 1e-12);
            prop_assert!((0.0..=1.0).contains(&pr.fdr_ceiling));
        }

        #[test]
        fn truth_stable_under_small_perturbation(
            rho in -0.95f64..0.95,
            b in proptest::collection::vec(-2.0f64..2.0, 3),
            frac in -0.99f64..0.99,
        ) {
            let s = spec(2);
            let theta = Ar1Params::new(rho, 1.0, b.clone()).unwrap();
            let t = truth_from_params(&theta, &s).unwrap();
            let dist = b.iter().map(|v| libm::fabs(libm::fabs(*v) - 0.1)).fold(1.0 - libm::fabs(rho), f64::min);
            prop_assume!(dist > 1e-9);
            let pert: Vec<f64> = b.iter().map(|v| v + frac * dist).collect();
            let rho2 = rho + frac * dist;
            let t2 = truth_from_params(&Ar1Params::new(rho2, 1.0, pert).unwrap(), &s).unwrap();
            prop_assert_eq!(t, t2);
        }
    }
}
