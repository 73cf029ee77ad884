use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::hypotheses::{DecisionConfig, GroupStructure, HypothesisKind, TestSpec};
use crate::model::PosteriorDraws;

/// `S × H` alternative-membership indicators, stored as one bitset per
/// hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosteriorIndicators {
    draws: usize,
    h: usize,
    words: usize,
    bits: Vec<u64>,
}

impl PosteriorIndicators {
    fn empty(draws: usize, h: usize) -> Self {
        let words = draws.div_ceil(64);
        Self { draws, h, words, bits: vec![0; words * h] }
    }

    #[inline]
    fn set(&mut self, s: usize, i: usize) {
        self.bits[i * self.words + s / 64] |= 1 << (s % 64);
    }

    /// Builds indicators from hand-written rows (`rows[s][i]`).
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let h = rows.first().map(Vec::len).ok_or_else(|| invalid("need at least one draw"))?;
        let mut out = Self::empty(rows.len(), h);
        for (s, r) in rows.iter().enumerate() {
            if r.len() != h {
                return Err(invalid("ragged indicator rows"));
            }
            for (i, &b) in r.iter().enumerate() {
                if b {
                    out.set(s, i);
                }
            }
        }
        Ok(out)
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn num_hypotheses(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn get(&self, s: usize, i: usize) -> bool {
        self.bits[i * self.words + s / 64] >> (s % 64) & 1 == 1
    }

    /// Bitset of draws lying in the alternative of hypothesis `i`.
    #[inline]
    pub fn column(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn count(&self, i: usize) -> u32 {
        self.column(i).iter().map(|w| w.count_ones()).sum()
    }
}

pub fn indicators(draws: &PosteriorDraws, spec: &TestSpec) -> Result<PosteriorIndicators> {
    if draws.num_covariates() != spec.num_covariates {
        return Err(invalid("posterior draws do not match the test spec"));
    }
    let h = spec.num_hypotheses();
    let mut out = PosteriorIndicators::empty(draws.len(), h);
    for (s, row) in draws.rows().enumerate() {
        for i in 0..h {
            let alt = match spec.kind(i) {
                HypothesisKind::Rho => spec.rho_alternative(row[0]),
                HypothesisKind::Beta(k) => spec.beta_alternative(row[2 + k]),
            };
            if alt {
                out.set(s, i);
            }
        }
    }
    Ok(out)
}

/// `v_i`: fraction of draws in the alternative of hypothesis `i`.
pub fn marginal_v(ind: &PosteriorIndicators) -> Vec<f64> {
    let s = ind.draws() as f64;
    (0..ind.num_hypotheses()).map(|i| ind.count(i) as f64 / s).collect()
}

/// Draw count behind `w_i(d)`.
pub(crate) fn joint_count(ind: &PosteriorIndicators, group: &[usize], i: usize, d: &[bool]) -> u32 {
    let own = ind.column(i);
    let mut acc: Vec<u64> = own.to_vec();
    for &j in group.iter().filter(|&&j| j != i) {
        let col = ind.column(j);
        if d[j] {
            acc.iter_mut().zip(col).for_each(|(a, c)| *a &= c);
        } else {
            acc.iter_mut().zip(col).for_each(|(a, c)| *a &= !c);
        }
    }
    acc.iter().map(|w| w.count_ones()).sum()
}

/// `w_i(d)`: posterior probability that `H₁ᵢ` holds and every other decision
/// in `G_i` is correct.
///
/// # Panics
/// If `g` or `d` disagree with `ind` on the number of hypotheses.
pub fn joint_w(ind: &PosteriorIndicators, g: &GroupStructure, d: &DecisionConfig) -> Vec<f64> {
    assert_eq!(g.len(), ind.num_hypotheses());
    assert_eq!(d.len(), ind.num_hypotheses());
    let s = ind.draws() as f64;
    (0..g.len()).map(|i| joint_count(ind, g.group(i), i, &d.bits) as f64 / s).collect()
}

/// `f_β(d) = Σ d_i (w_i(d) − β)`.
pub fn objective_f(d: &DecisionConfig, ind: &PosteriorIndicators, g: &GroupStructure, beta: f64) -> f64 {
    let w = joint_w(ind, g, d);
    d.bits.iter().zip(&w).filter(|(b, _)| **b).map(|(_, w)| w - beta).sum()
}
