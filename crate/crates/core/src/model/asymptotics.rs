//! Log-likelihood ratios, the KL-divergence rate `h(θ)` and the rate
//! constant `J` that governs exponential decay of the error rates.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Ar1Params, CovariateDesign, Dataset, SufficientStats};
use crate::error::{invalid, Result};
use crate::hypotheses::{truth_from_params, HypothesisKind, TestSpec};
use crate::math;

/// Finite-`n` plug-ins for the quadratic-form limits `c(β)`, `c(β₀)`,
/// `c₁₀(β, β₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlRateInputs {
    pub c_beta: f64,
    pub c_beta0: f64,
    pub c10: f64,
}

fn check_pair(theta: &Ar1Params, theta0: &Ar1Params) -> Result<()> {
    theta.validate()?;
    theta0.validate()?;
    if theta.beta.len() != theta0.beta.len() {
        return Err(invalid("parameter dimensions differ"));
    }
    Ok(())
}

/// `log R_n(θ) = log f_θ(X_n) − log f_θ₀(X_n)`, evaluated from sufficient
/// statistics.
pub fn log_likelihood_ratio(theta: &Ar1Params, theta0: &Ar1Params, data: &Dataset) -> Result<f64> {
    check_pair(theta, theta0)?;
    if theta.beta.len() != data.design.z.ncols() {
        return Err(invalid("parameter dimension does not match design"));
    }
    let st = SufficientStats::from_dataset(data);
    Ok(log_likelihood_ratio_from_stats(theta, theta0, &st))
}

pub(crate) fn log_likelihood_ratio_from_stats(
    theta: &Ar1Params,
    theta0: &Ar1Params,
    st: &SufficientStats,
) -> f64 {
    let (s2, s20) = (theta.sigma2, theta0.sigma2);
    let (rho, rho0) = (theta.rho, theta0.rho);
    let b = DVector::from_column_slice(&theta.beta);
    let b0 = DVector::from_column_slice(&theta0.beta);
    let n = st.n as f64;

    let mut neg = n * 0.5 * math::ln(s2 / s20);
    neg += (0.5 / s2 - 0.5 / s20) * st.sxx;
    neg += (rho * rho / (2.0 * s2) - rho0 * rho0 / (2.0 * s20)) * st.sll;
    neg += b.dot(&(&st.zz * &b)) / (2.0 * s2) - b0.dot(&(&st.zz * &b0)) / (2.0 * s20);
    neg -= (rho / s2 - rho0 / s20) * st.sxl;
    neg -= (&b / s2 - &b0 / s20).dot(&st.zx);
    neg += (&b * (rho / s2) - &b0 * (rho0 / s20)).dot(&st.zl);
    -neg
}

/// KL-divergence rate `h(θ)` of the AR(1) model relative to `θ₀`.
pub fn kl_rate_h(theta: &Ar1Params, theta0: &Ar1Params, q: &KlRateInputs) -> Result<f64> {
    check_pair(theta, theta0)?;
    if !(libm::fabs(theta0.rho) < 1.0) {
        return Err(invalid("KL rate requires a stationary truth, |rho0| < 1"));
    }
    Ok(h_unchecked(theta.rho, theta.sigma2, theta0, q))
}

fn h_unchecked(rho: f64, s2: f64, theta0: &Ar1Params, q: &KlRateInputs) -> f64 {
    let (rho0, s20) = (theta0.rho, theta0.sigma2);
    let one_m = 1.0 - rho0 * rho0;
    let v = (s20 + q.c_beta0) / one_m;
    0.5 * math::ln(s2 / s20) + (0.5 / s2 - 0.5 / s20) * v + (rho * rho / (2.0 * s2) - rho0 * rho0 / (2.0 * s20)) * v
        + q.c_beta / (2.0 * s2)
        - q.c_beta0 / (2.0 * s20)
        - (rho / s2 - rho0 / s20) * rho0 * v
        - (q.c10 / s2 - q.c_beta0 / s20)
}

/// `(1/n)Σ(z_t'β)²`, `(1/n)Σ(z_t'β₀)²`, `(1/n)Σ(z_t'β)(z_t'β₀)`.
pub fn quadratic_limits(beta: &[f64], beta0: &[f64], design: &CovariateDesign) -> Result<KlRateInputs> {
    let p = design.z.ncols();
    if beta.len() != p || beta0.len() != p {
        return Err(invalid("coefficient length must equal design columns"));
    }
    let b = DVector::from_column_slice(beta);
    let b0 = DVector::from_column_slice(beta0);
    let fb = &design.z * &b;
    let fb0 = &design.z * &b0;
    let n = design.n() as f64;
    Ok(KlRateInputs {
        c_beta: fb.dot(&fb) / n,
        c_beta0: fb0.dot(&fb0) / n,
        c10: fb.dot(&fb0) / n,
    })
}

/// Search settings for [`estimate_j`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JSearchConfig {
    /// Grid points per coordinate.
    pub grid_points: usize,
    /// Coordinate-wise golden-section sweeps after the grid.
    pub refine_iterations: usize,
}

impl Default for JSearchConfig {
    fn default() -> Self {
        Self { grid_points: 41, refine_iterations: 60 }
    }
}

/// Minimum of `h` over parameters that make one particular decision wrong.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedMinimum {
    pub hypothesis: usize,
    pub h: f64,
    pub theta: Ar1Params,
    /// How many times the unconstrained box had to be enlarged.
    pub widened: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JEstimate {
    pub j: f64,
    pub argmin: Ar1Params,
    pub hypothesis: usize,
    pub per_hypothesis: Vec<ConstrainedMinimum>,
}

/// `h` restricted to moving `(ρ, log σ², β_i)` away from `θ₀`.
struct Slice<'a> {
    theta0: &'a Ar1Params,
    gram: DMatrix<f64>,
    g_beta0: DVector<f64>,
    c0: f64,
    coord: Option<usize>,
}

impl Slice<'_> {
    fn eval(&self, rho: f64, log_s2: f64, b: f64) -> f64 {
        let mut q = KlRateInputs { c_beta: self.c0, c_beta0: self.c0, c10: self.c0 };
        if let Some(i) = self.coord {
            let d = b - self.theta0.beta[i];
            q.c_beta = self.c0 + 2.0 * d * self.g_beta0[i] + d * d * self.gram[(i, i)];
            q.c10 = self.c0 + d * self.g_beta0[i];
        }
        h_unchecked(rho, math::exp(log_s2), self.theta0, &q)
    }
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    lo: f64,
    hi: f64,
    /// Whether each end is a hard constraint (not widened).
    hard_lo: bool,
    hard_hi: bool,
}

impl Interval {
    fn free(center: f64, half: f64) -> Self {
        Self { lo: center - half, hi: center + half, hard_lo: false, hard_hi: false }
    }

    fn grid(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        let k = if self.hi > self.lo { k.max(2) } else { 1 };
        (0..k).map(move |j| if k == 1 { self.lo } else { self.lo + (self.hi - self.lo) * j as f64 / (k - 1) as f64 })
    }

    fn step(&self, k: usize) -> f64 {
        (self.hi - self.lo) / (k.max(2) - 1) as f64
    }

    fn widen_toward(&mut self, at_lo: bool) -> bool {
        let w = self.hi - self.lo;
        if at_lo && !self.hard_lo {
            self.lo -= w;
            true
        } else if !at_lo && !self.hard_hi {
            self.hi += w;
            true
        } else {
            false
        }
    }
}

fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (math::sqrt(5.0) - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mut best = (a, f(a));
    for x in [b, c, d] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Grid search plus coordinate-wise golden refinement on a box.
fn minimize_box(slice: &Slice<'_>, mut boxes: [Interval; 3], cfg: &JSearchConfig) -> ([f64; 3], f64, u32) {
    let k = cfg.grid_points;
    let mut widened = 0;
    loop {
        let mut best = ([0.0; 3], f64::INFINITY);
        for r in boxes[0].grid(k) {
            for s in boxes[1].grid(k) {
                for b in boxes[2].grid(k) {
                    let v = slice.eval(r, s, b);
                    if v < best.1 {
                        best = ([r, s, b], v);
                    }
                }
            }
        }
        // enlarge any free edge the grid minimum sits on
        let mut grew = false;
        for (c, bx) in boxes.iter_mut().enumerate() {
            let x = best.0[c];
            let eps = 1e-12 * (1.0 + libm::fabs(x));
            if bx.hi > bx.lo && libm::fabs(x - bx.lo) <= eps {
                grew |= bx.widen_toward(true);
            } else if bx.hi > bx.lo && libm::fabs(x - bx.hi) <= eps {
                grew |= bx.widen_toward(false);
            }
        }
        if grew && widened < 20 {
            widened += 1;
            continue;
        }

        let mut x = best.0;
        let mut fx = best.1;
        let steps: [f64; 3] = [boxes[0].step(k), boxes[1].step(k), boxes[2].step(k)];
        for _ in 0..cfg.refine_iterations {
            for c in 0..3 {
                let bx = boxes[c];
                if bx.hi <= bx.lo {
                    continue;
                }
                let lo = if bx.hard_lo { f64::max(bx.lo, x[c] - steps[c]) } else { x[c] - steps[c] };
                let hi = if bx.hard_hi { f64::min(bx.hi, x[c] + steps[c]) } else { x[c] + steps[c] };
                let (xc, fc) = golden(
                    |t| {
                        let mut y = x;
                        y[c] = t;
                        slice.eval(y[0], y[1], y[2])
                    },
                    lo,
                    hi,
                    1e-13 * (1.0 + libm::fabs(x[c])),
                );
                if fc < fx {
                    x[c] = xc;
                    fx = fc;
                }
            }
        }
        return (x, fx, widened);
    }
}

/// Estimates `J`: the smallest KL rate among parameters that make at least
/// one decision of the true configuration wrong.
///
/// Each hypothesis is violated on its own with `(ρ, σ², β_i)` free and the
/// remaining coefficients held at `θ₀`.
pub fn estimate_j(
    theta0: &Ar1Params,
    spec: &TestSpec,
    design: &CovariateDesign,
    cfg: &JSearchConfig,
) -> Result<JEstimate> {
    theta0.validate()?;
    spec.validate()?;
    if !(libm::fabs(theta0.rho) < 1.0) {
        return Err(invalid("J requires a stationary truth, |rho0| < 1"));
    }
    if theta0.beta.len() != design.z.ncols() || theta0.num_covariates() != spec.num_covariates {
        return Err(invalid("dimension mismatch between truth, spec and design"));
    }
    let truth = truth_from_params(theta0, spec)?;
    let gram = design.gram_over_n();
    let b0 = DVector::from_column_slice(&theta0.beta);
    let g_beta0 = &gram * &b0;
    let c0 = b0.dot(&g_beta0);
    let log_s20 = math::ln(theta0.sigma2);

    let mut per = Vec::new();
    for hyp in 0..spec.num_hypotheses() {
        let (coord, mut candidates): (Option<usize>, Vec<[Interval; 3]>) = match spec.kind(hyp) {
            HypothesisKind::Rho => {
                let bound = spec.rho_null_bound;
                let w = 1.0 + libm::fabs(theta0.rho);
                let s = Interval::free(log_s20, 1.5);
                let pinned = Interval { lo: 0.0, hi: 0.0, hard_lo: true, hard_hi: true };
                // ρ is a true null here (stationary truth): violation needs |ρ| ≥ bound
                let up = Interval { lo: bound, hi: bound + w, hard_lo: true, hard_hi: false };
                let down = Interval { lo: -bound - w, hi: -bound, hard_lo: false, hard_hi: true };
                (None, alloc::vec![[up, s, pinned], [down, s, pinned]])
            }
            HypothesisKind::Beta(i) => {
                let eps = spec.null_radius;
                let r = Interval::free(theta0.rho, 1.0);
                let s = Interval::free(log_s20, 1.5);
                let span = 2.0 * (libm::fabs(theta0.beta[i]) + eps) + 1.0;
                let cands = if truth.r[hyp] {
                    alloc::vec![[r, s, Interval { lo: -eps, hi: eps, hard_lo: true, hard_hi: true }]]
                } else {
                    alloc::vec![
                        [r, s, Interval { lo: eps, hi: eps + span, hard_lo: true, hard_hi: false }],
                        [r, s, Interval { lo: -eps - span, hi: -eps, hard_lo: false, hard_hi: true }],
                    ]
                };
                (Some(i), cands)
            }
        };
        let slice = Slice { theta0, gram: gram.clone(), g_beta0: g_beta0.clone(), c0, coord };
        let mut best: Option<ConstrainedMinimum> = None;
        for boxes in candidates.drain(..) {
            let (x, fx, widened) = minimize_box(&slice, boxes, cfg);
            let mut theta = theta0.clone();
            theta.rho = x[0];
            theta.sigma2 = math::exp(x[1]);
            if let Some(i) = coord {
                theta.beta[i] = x[2];
            }
            if best.as_ref().is_none_or(|b| fx < b.h) {
                best = Some(ConstrainedMinimum { hypothesis: hyp, h: fx, theta, widened });
            }
        }
        per.push(best.expect("at least one candidate box"));
    }
    let winner = per
        .iter()
        .min_by(|a, b| a.h.total_cmp(&b.h))
        .ok_or_else(|| invalid("no hypotheses"))?;
    Ok(JEstimate { j: winner.h, argmin: winner.theta.clone(), hypothesis: winner.hypothesis, per_hypothesis: per })
}
