//! Maximisation of `f_β` per connected component.
//!
//! Each term `i` only depends on `d_i` and the decisions on `G_i \ {i}`, so
//! its draw count is tabulated once per sub-configuration of the
//! neighbours. The tables do not depend on `β`; a [`DecisionProblem`] can be
//! solved for many `β` values on the same draws.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::PosteriorIndicators;
use crate::error::{invalid, Result};
use crate::hypotheses::{ComponentPartition, DecisionConfig, GroupStructure};
use crate::math;
use crate::seed::{self, stream};

/// Components up to this size may be enumerated exhaustively.
pub const MAX_EXACT_LIMIT: usize = 26;
const DENSE_LIMIT: usize = 16;
const KEY_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingConfig {
    /// Proposals per restart.
    pub iterations: usize,
    pub initial_temperature: f64,
    /// Geometric cooling factor applied after every proposal.
    pub cooling: f64,
    pub restarts: usize,
}

impl Default for AnnealingConfig {
    fn default() -> Self {
        Self { iterations: 20_000, initial_temperature: 0.5, cooling: 0.9995, restarts: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub exact_component_limit: usize,
    pub annealing: AnnealingConfig,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { exact_component_limit: 20, annealing: AnnealingConfig::default(), seed: 0 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_EXACT_LIMIT).contains(&self.exact_component_limit) {
            return Err(invalid(alloc::format!("exact_component_limit must lie in 1..={MAX_EXACT_LIMIT}")));
        }
        let a = &self.annealing;
        if !(a.cooling > 0.0 && a.cooling < 1.0) {
            return Err(invalid("cooling factor must lie in (0, 1)"));
        }
        if !(a.initial_temperature > 0.0) || a.iterations == 0 || a.restarts == 0 {
            return Err(invalid("annealing needs a positive temperature, iterations and restarts"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Counts {
    Dense(Vec<u32>),
    /// Sorted `(key, count)` pairs; at most one entry per draw.
    Sparse(Vec<(u64, u32)>),
    /// Too many neighbours for a key; counted from the bitsets.
    Bitset,
}

#[derive(Debug, Clone)]
struct Term {
    hyp: usize,
    /// Local positions of `G_i \ {i}` within the component.
    nbrs: Vec<usize>,
    counts: Counts,
}

#[derive(Debug, Clone)]
struct Component {
    members: Vec<usize>,
    terms: Vec<Term>,
    /// For local bit `j`: every `(term, position)` with `j` among the term's
    /// neighbours.
    rev: Vec<Vec<(usize, usize)>>,
}

/// Precomputed per-term draw counts for one posterior sample.
#[derive(Debug, Clone)]
pub struct DecisionProblem {
    ind: PosteriorIndicators,
    v_counts: Vec<u32>,
    components: Vec<Component>,
}

/// Result of [`DecisionProblem::solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub d: DecisionConfig,
    pub f_beta: f64,
    pub beta: f64,
    /// Ids of components solved by annealing rather than enumeration.
    pub annealed: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Score {
    c: u64,
    k: usize,
}

/// Orders on `f_β`, then fewer rejections; `bs = β·S`.
fn cmp_score(a: Score, b: Score, bs: f64) -> Ordering {
    if a.k == b.k {
        return a.c.cmp(&b.c);
    }
    let diff = (a.c as f64 - b.c as f64) - bs * (a.k as f64 - b.k as f64);
    diff.partial_cmp(&0.0).unwrap_or(Ordering::Equal).then(b.k.cmp(&a.k))
}

/// `Greater` means `a` is the preferred mask (member 0 is the first bit).
fn cmp_mask(a: u64, b: u64) -> Ordering {
    let x = a ^ b;
    if x == 0 {
        return Ordering::Equal;
    }
    if a & x & x.wrapping_neg() == 0 {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

fn gather(state: u64, nbrs: &[usize]) -> u64 {
    nbrs.iter().enumerate().fold(0, |key, (k, &j)| key | (state >> j & 1) << k)
}

impl Term {
    fn count_key(&self, key: u64) -> u32 {
        match &self.counts {
            Counts::Dense(t) => t[key as usize],
            Counts::Sparse(t) => t.binary_search_by_key(&key, |e| e.0).map_or(0, |p| t[p].1),
            Counts::Bitset => unreachable!("bitset terms have no key"),
        }
    }
}

impl DecisionProblem {
    pub fn new(ind: &PosteriorIndicators, g: &GroupStructure, comp: &ComponentPartition) -> Result<Self> {
        let h = ind.num_hypotheses();
        if g.len() != h || comp.component_of.len() != h {
            return Err(invalid("indicators, groups and components disagree on H"));
        }
        let mut local = vec![0usize; h];
        for members in &comp.components {
            for (p, &i) in members.iter().enumerate() {
                local[i] = p;
            }
        }
        let mut components = Vec::with_capacity(comp.components.len());
        for (cid, members) in comp.components.iter().enumerate() {
            let mut terms = Vec::with_capacity(members.len());
            let mut rev = vec![Vec::new(); members.len()];
            for (t, &i) in members.iter().enumerate() {
                let mut nbrs = Vec::new();
                for &j in g.group(i).iter().filter(|&&j| j != i) {
                    if comp.component_of[j] != cid {
                        return Err(invalid("a group straddles two components"));
                    }
                    rev[local[j]].push((t, nbrs.len()));
                    nbrs.push(local[j]);
                }
                let nbr_hyps: Vec<usize> = nbrs.iter().map(|&p| members[p]).collect();
                let counts = tabulate(ind, i, &nbr_hyps);
                terms.push(Term { hyp: i, nbrs, counts });
            }
            components.push(Component { members: members.clone(), terms, rev });
        }
        let v_counts = (0..h).map(|i| ind.count(i)).collect();
        Ok(Self { ind: ind.clone(), v_counts, components })
    }

    pub fn num_hypotheses(&self) -> usize {
        self.v_counts.len()
    }

    pub fn draws(&self) -> usize {
        self.ind.draws()
    }

    pub fn component_sizes(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.members.len()).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        let s = self.draws() as f64;
        self.v_counts.iter().map(|&c| c as f64 / s).collect()
    }

    /// `w(d)` from the cached counts.
    pub fn w(&self, d: &DecisionConfig) -> Vec<f64> {
        assert_eq!(d.len(), self.num_hypotheses());
        let s = self.draws() as f64;
        let mut out = vec![0.0; d.len()];
        for c in &self.components {
            let state: Vec<bool> = c.members.iter().map(|&i| d.bits[i]).collect();
            for t in &c.terms {
                out[t.hyp] = self.term_count(c, t, &state) as f64 / s;
            }
        }
        out
    }

    /// `f_β(d)` from the cached counts.
    pub fn objective(&self, d: &DecisionConfig, beta: f64) -> f64 {
        let w = self.w(d);
        d.bits.iter().zip(&w).filter(|(b, _)| **b).map(|(_, w)| w - beta).sum()
    }

    fn term_count(&self, c: &Component, t: &Term, state: &[bool]) -> u32 {
        match t.counts {
            Counts::Bitset => {
                let mut acc = self.ind.column(t.hyp).to_vec();
                for &p in &t.nbrs {
                    let col = self.ind.column(c.members[p]);
                    if state[p] {
                        acc.iter_mut().zip(col).for_each(|(a, b)| *a &= b);
                    } else {
                        acc.iter_mut().zip(col).for_each(|(a, b)| *a &= !b);
                    }
                }
                acc.iter().map(|w| w.count_ones()).sum()
            }
            _ => {
                let key = t.nbrs.iter().enumerate().fold(0u64, |k, (b, &p)| k | (state[p] as u64) << b);
                t.count_key(key)
            }
        }
    }

    /// Maximises `f_β` with the configured strategy and tie-break.
    pub fn solve(&self, beta: f64, cfg: &OptimizerConfig) -> Result<Solution> {
        if !(0.0..1.0).contains(&beta) {
            return Err(invalid("beta must lie in [0, 1)"));
        }
        cfg.validate()?;
        let bs = beta * self.draws() as f64;
        let mut bits = vec![false; self.num_hypotheses()];
        let mut total = Score { c: 0, k: 0 };
        let mut annealed = Vec::new();
        for (cid, c) in self.components.iter().enumerate() {
            let (state, score) = if c.members.len() <= cfg.exact_component_limit {
                let (mask, score) = enumerate(c, bs);
                ((0..c.members.len()).map(|p| mask >> p & 1 == 1).collect(), score)
            } else {
                annealed.push(cid);
                self.anneal(cid, c, bs, cfg)
            };
            for (p, &i) in c.members.iter().enumerate() {
                bits[i] = state[p];
            }
            total.c += score.c;
            total.k += score.k;
        }
        let f_beta = total.c as f64 / self.draws() as f64 - beta * total.k as f64;
        Ok(Solution { d: DecisionConfig { bits }, f_beta, beta, annealed })
    }

    fn anneal(&self, cid: usize, c: &Component, bs: f64, cfg: &OptimizerConfig) -> (Vec<bool>, Score) {
        let a = &cfg.annealing;
        let k = c.members.len();
        let s = self.draws() as f64;
        let mut best: Option<(Vec<bool>, Score)> = None;
        for restart in 0..a.restarts {
            let mut rng = seed::rng_from(cfg.seed, &[stream::ANNEAL, cid as u64, restart as u64]);
            let mut st = if restart == 0 {
                let init = c.members.iter().map(|&i| self.v_counts[i] as f64 > bs).collect();
                State::new(self, c, init)
            } else {
                let init = (0..k).map(|_| rng.random::<bool>()).collect();
                State::new(self, c, init)
            };
            let mut run_best = (st.d.clone(), st.score());
            let mut temp = a.initial_temperature;
            for _ in 0..a.iterations {
                let j = rng.random_range(0..k);
                let (dc, dk) = st.delta(self, c, j);
                let df = (dc as f64 - bs * dk as f64) / s;
                if df >= 0.0 || rng.random::<f64>() < math::exp(df / temp) {
                    st.commit(self, c, j);
                    let sc = st.score();
                    if prefer(&st.d, sc, &run_best.0, run_best.1, bs) {
                        run_best = (st.d.clone(), sc);
                    }
                }
                temp *= a.cooling;
            }
            // greedy polish to a local optimum of the full order
            let mut st = State::new(self, c, run_best.0);
            loop {
                let mut moved = false;
                for j in 0..k {
                    let cur = st.score();
                    let (dc, dk) = st.delta(self, c, j);
                    let next = Score { c: (cur.c as i64 + dc) as u64, k: (cur.k as i64 + dk) as usize };
                    let mut flipped = st.d.clone();
                    flipped[j] = !flipped[j];
                    if prefer(&flipped, next, &st.d, cur, bs) {
                        st.commit(self, c, j);
                        moved = true;
                    }
                }
                if !moved {
                    break;
                }
            }
            let sc = st.score();
            if best.as_ref().is_none_or(|(bd, bsc)| prefer(&st.d, sc, bd, *bsc, bs)) {
                best = Some((st.d, sc));
            }
        }
        best.expect("at least one restart")
    }
}

/// `true` when `(a, sa)` beats `(b, sb)`: higher `f_β`, then fewer
/// rejections, then lexicographically smaller.
fn prefer(a: &[bool], sa: Score, b: &[bool], sb: Score, bs: f64) -> bool {
    match cmp_score(sa, sb, bs) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a < b,
    }
}

fn tabulate(ind: &PosteriorIndicators, i: usize, nbr_hyps: &[usize]) -> Counts {
    let k = nbr_hyps.len();
    if k > KEY_LIMIT {
        return Counts::Bitset;
    }
    let key_of = |s: usize| nbr_hyps.iter().enumerate().fold(0u64, |key, (b, &j)| key | (ind.get(s, j) as u64) << b);
    let draws = (0..ind.draws()).filter(|&s| ind.get(s, i));
    if k <= DENSE_LIMIT {
        let mut t = vec![0u32; 1 << k];
        for s in draws {
            t[key_of(s) as usize] += 1;
        }
        Counts::Dense(t)
    } else {
        let mut keys: Vec<u64> = draws.map(key_of).collect();
        keys.sort_unstable();
        let mut t: Vec<(u64, u32)> = Vec::new();
        for key in keys {
            match t.last_mut() {
                Some(e) if e.0 == key => e.1 += 1,
                _ => t.push((key, 1)),
            }
        }
        Counts::Sparse(t)
    }
}

fn enumerate(c: &Component, bs: f64) -> (u64, Score) {
    let k = c.members.len();
    let mut best = (0u64, Score { c: 0, k: 0 });
    for mask in 1u64..(1 << k) {
        let mut total = 0u64;
        let mut t_bits = mask;
        while t_bits != 0 {
            let t = t_bits.trailing_zeros() as usize;
            t_bits &= t_bits - 1;
            let term = &c.terms[t];
            total += term.count_key(gather(mask, &term.nbrs)) as u64;
        }
        let sc = Score { c: total, k: mask.count_ones() as usize };
        let better = match cmp_score(sc, best.1, bs) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => cmp_mask(mask, best.0) == Ordering::Greater,
        };
        if better {
            best = (mask, sc);
        }
    }
    best
}

/// Annealing state with cached term keys and counts.
struct State {
    d: Vec<bool>,
    keys: Vec<u64>,
    counts: Vec<u32>,
    c: u64,
    k: usize,
}

impl State {
    fn new(p: &DecisionProblem, comp: &Component, d: Vec<bool>) -> Self {
        let keys: Vec<u64> = comp
            .terms
            .iter()
            .map(|t| if t.nbrs.len() <= KEY_LIMIT { t.nbrs.iter().enumerate().fold(0, |k, (b, &q)| k | (d[q] as u64) << b) } else { 0 })
            .collect();
        let counts: Vec<u32> = comp.terms.iter().map(|t| p.term_count(comp, t, &d)).collect();
        let c = d.iter().zip(&counts).filter(|(b, _)| **b).map(|(_, &n)| n as u64).sum();
        let k = d.iter().filter(|b| **b).count();
        Self { d, keys, counts, c, k }
    }

    fn score(&self) -> Score {
        Score { c: self.c, k: self.k }
    }

    fn new_count(&mut self, p: &DecisionProblem, comp: &Component, t: usize, pos: usize, j: usize) -> u32 {
        let term = &comp.terms[t];
        match term.counts {
            Counts::Bitset => {
                self.d[j] = !self.d[j];
                let n = p.term_count(comp, term, &self.d);
                self.d[j] = !self.d[j];
                n
            }
            _ => term.count_key(self.keys[t] ^ (1 << pos)),
        }
    }

    /// Change in `(C, k)` if bit `j` were flipped.
    fn delta(&mut self, p: &DecisionProblem, comp: &Component, j: usize) -> (i64, i64) {
        let mut dc = 0i64;
        for &(t, pos) in &comp.rev[j] {
            if self.d[t] {
                dc += self.new_count(p, comp, t, pos, j) as i64 - self.counts[t] as i64;
            }
        }
        if self.d[j] {
            dc -= self.counts[j] as i64;
            (dc, -1)
        } else {
            dc += self.counts[j] as i64;
            (dc, 1)
        }
    }

    fn commit(&mut self, p: &DecisionProblem, comp: &Component, j: usize) {
        for &(t, pos) in &comp.rev[j] {
            let n = self.new_count(p, comp, t, pos, j);
            self.keys[t] ^= 1 << pos;
            if self.d[t] {
                self.c = self.c + n as u64 - self.counts[t] as u64;
            }
            self.counts[t] = n;
        }
        if self.d[j] {
            self.c -= self.counts[j] as u64;
            self.k -= 1;
        } else {
            self.c += self.counts[j] as u64;
            self.k += 1;
        }
        self.d[j] = !self.d[j];
    }
}

/// Solves a single instance; see [`DecisionProblem`] for repeated `β`.
pub fn optimize(
    ind: &PosteriorIndicators,
    g: &GroupStructure,
    comp: &ComponentPartition,
    beta: f64,
    cfg: &OptimizerConfig,
) -> Result<DecisionConfig> {
    Ok(DecisionProblem::new(ind, g, comp)?.solve(beta, cfg)?.d)
}
