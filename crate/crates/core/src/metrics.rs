//! Posterior and frequentist error rates, and log-linear decay fits.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hypotheses::{DecisionConfig, TruthAssignment};
use crate::math;

/// Data-conditional error rates of one decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorErrorReport {
    pub fdr_xn: f64,
    pub fnr_xn: f64,
    pub mfdr_xn: f64,
    pub mfnr_xn: f64,
    pub rejection_count: usize,
    pub acceptance_count: usize,
}

/// `v` are marginal and `w` joint (at `d̂`) alternative probabilities.
pub fn posterior_rates(v: &[f64], w: &[f64], d: &DecisionConfig) -> Result<PosteriorErrorReport> {
    if v.len() != d.len() || w.len() != d.len() {
        return Err(invalid("v, w and d must have the same length"));
    }
    let mut acc = [0.0; 4];
    for ((&vi, &wi), &di) in v.iter().zip(w).zip(&d.bits) {
        if di {
            acc[0] += 1.0 - vi;
            acc[2] += 1.0 - wi;
        } else {
            acc[1] += vi;
            acc[3] += wi;
        }
    }
    let rej = d.rejections();
    let acc_n = d.len() - rej;
    let r = rej.max(1) as f64;
    let a = acc_n.max(1) as f64;
    Ok(PosteriorErrorReport {
        fdr_xn: acc[0] / r,
        fnr_xn: acc[1] / a,
        mfdr_xn: acc[2] / r,
        mfnr_xn: acc[3] / a,
        rejection_count: rej,
        acceptance_count: acc_n,
    })
}

/// Realised false discovery proportion `Σ d(1−r) / (Σd ∨ 1)`.
pub fn false_discovery_proportion(d: &DecisionConfig, truth: &TruthAssignment) -> f64 {
    let fd = d.bits.iter().zip(&truth.r).filter(|(d, r)| **d && !**r).count();
    fd as f64 / d.rejections().max(1) as f64
}

/// Realised false non-discovery proportion `Σ (1−d)r / (Σ(1−d) ∨ 1)`.
pub fn false_nondiscovery_proportion(d: &DecisionConfig, truth: &TruthAssignment) -> f64 {
    let fnd = d.bits.iter().zip(&truth.r).filter(|(d, r)| !**d && **r).count();
    fnd as f64 / (d.len() - d.rejections()).max(1) as f64
}

/// One replicate's decision, truth and posterior rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub d_hat: DecisionConfig,
    pub truth: TruthAssignment,
    pub posterior: PosteriorErrorReport,
}

/// Conditional mean with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Sample sd over `√count`; zero when `count = 1`.
    pub se: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_values(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            math::sqrt(var / n as f64)
        } else {
            0.0
        };
        Some(Self { mean, se, count: n })
    }
}

/// Replicate-averaged rates; `None` marks an empty conditioning event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequentistErrorReport {
    pub pfdr: Option<Estimate>,
    pub pfnr: Option<Estimate>,
    pub pbfdr: Option<Estimate>,
    pub pbfnr: Option<Estimate>,
    pub mpbfdr: Option<Estimate>,
    pub mpbfnr: Option<Estimate>,
    pub n_replicates: usize,
    /// Replicates with at least one rejection.
    pub n_conditioning_fdr: usize,
    /// Replicates with at least one acceptance.
    pub n_conditioning_fnr: usize,
}

pub fn frequentist_rates(replicates: &[ReplicateRecord]) -> Result<FrequentistErrorReport> {
    if replicates.is_empty() {
        return Err(Error::InsufficientData("need at least one replicate".into()));
    }
    let mut cols: [Vec<f64>; 6] = Default::default();
    for r in replicates {
        if r.d_hat.len() != r.truth.len() {
            return Err(invalid("decision and truth lengths differ"));
        }
        if r.d_hat.rejections() > 0 {
            cols[0].push(false_discovery_proportion(&r.d_hat, &r.truth));
            cols[2].push(r.posterior.fdr_xn);
            cols[4].push(r.posterior.mfdr_xn);
        }
        if r.d_hat.rejections() < r.d_hat.len() {
            cols[1].push(false_nondiscovery_proportion(&r.d_hat, &r.truth));
            cols[3].push(r.posterior.fnr_xn);
            cols[5].push(r.posterior.mfnr_xn);
        }
    }
    Ok(FrequentistErrorReport {
        pfdr: Estimate::from_values(&cols[0]),
        pfnr: Estimate::from_values(&cols[1]),
        pbfdr: Estimate::from_values(&cols[2]),
        pbfnr: Estimate::from_values(&cols[3]),
        mpbfdr: Estimate::from_values(&cols[4]),
        mpbfnr: Estimate::from_values(&cols[5]),
        n_replicates: replicates.len(),
        n_conditioning_fdr: cols[0].len(),
        n_conditioning_fnr: cols[1].len(),
    })
}

/// Least-squares fit of `log(metric)` against `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub metric: String,
    pub ns: Vec<usize>,
    pub values: Vec<f64>,
    /// `(1/n)·log(metric)`; `None` where the metric is zero.
    pub log_rates_over_n: Vec<Option<f64>>,
    /// The `n` values that entered the fit.
    pub fitted_ns: Vec<usize>,
    /// `n` values dropped because the metric had already reached zero.
    pub excluded_ns: Vec<usize>,
    /// `-∞` when every value is zero.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub j_reference: f64,
    /// `slope + J`; at most an `ε`-sized positive number when the decay
    /// bound holds.
    pub bound_slack: f64,
    pub degenerate: bool,
}

/// Fits the metric over the strictly positive prefix of the `n` grid.
///
/// A zero value ends the usable range; later points are listed in
/// `excluded_ns`. Needs at least three positive points unless all values
/// are zero, which gives a degenerate fit.
pub fn rate_fit(metric: &str, values: &[f64], ns: &[usize], j: f64) -> Result<RateFit> {
    if values.len() != ns.len() {
        return Err(invalid("values and ns differ in length"));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("ns must be strictly increasing"));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("metric values must be finite and non-negative"));
    }
    let log_rates_over_n = values
        .iter()
        .zip(ns)
        .map(|(&v, &n)| (v > 0.0).then(|| math::ln(v) / n as f64))
        .collect();
    let used = values.iter().take_while(|v| **v > 0.0).count();
    let base = RateFit {
        metric: metric.into(),
        ns: ns.to_vec(),
        values: values.to_vec(),
        log_rates_over_n,
        fitted_ns: ns[..used].to_vec(),
        excluded_ns: ns[used..].to_vec(),
        slope: f64::NEG_INFINITY,
        intercept: f64::NAN,
        r_squared: f64::NAN,
        j_reference: j,
        bound_slack: f64::NEG_INFINITY,
        degenerate: true,
    };
    if values.iter().all(|v| *v == 0.0) {
        return Ok(base);
    }
    if used < 3 {
        return Err(Error::InsufficientData(alloc::format!(
            "{metric}: only {used} positive points before the first zero"
        )));
    }
    let xs: Vec<f64> = ns[..used].iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = values[..used].iter().map(|&v| math::ln(v)).collect();
    let k = used as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| math::sq(y - intercept - slope * x)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit { slope, intercept, r_squared, bound_slack: slope + j, degenerate: false, ..base })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn d(bits: &[u8]) -> DecisionConfig {
        DecisionConfig { bits: bits.iter().map(|&b| b == 1).collect() }
    }

    #[test]
    fn posterior_examples() {
        let r = posterior_rates(&[0.9, 0.8, 0.1], &[0.9, 0.8, 0.1], &d(&[1, 1, 0])).unwrap();
        assert!((r.fdr_xn - 0.15).abs() < 1e-12);
        assert!((r.fnr_xn - 0.1).abs() < 1e-12);
        assert_eq!((r.rejection_count, r.acceptance_count), (2, 1));

        let zero = posterior_rates(&[0.3, 0.7], &[0.3, 0.7], &d(&[0, 0])).unwrap();
        assert_eq!(zero.fdr_xn, 0.0);
        assert_eq!(zero.mfdr_xn, 0.0);
        let ones = posterior_rates(&[0.3, 0.7], &[0.3, 0.7], &d(&[1, 1])).unwrap();
        assert_eq!(ones.fnr_xn, 0.0);

        // singleton groups: w = v
        let v = [0.2, 0.95, 0.4, 0.6];
        let s = posterior_rates(&v, &v, &d(&[0, 1, 0, 1])).unwrap();
        assert_eq!((s.fdr_xn, s.fnr_xn), (s.mfdr_xn, s.mfnr_xn));
        assert!(posterior_rates(&v, &v[..3], &d(&[0, 1, 0, 1])).is_err());
    }

    fn record(bits: &[u8], truth: &[u8], fdr: f64) -> ReplicateRecord {
        let t = TruthAssignment::from_bits(truth.iter().map(|&b| b == 1).collect());
        let dh = d(bits);
        let posterior = PosteriorErrorReport {
            fdr_xn: fdr,
            fnr_xn: 0.0,
            mfdr_xn: fdr,
            mfnr_xn: 0.0,
            rejection_count: dh.rejections(),
            acceptance_count: dh.len() - dh.rejections(),
        };
        ReplicateRecord { d_hat: dh, truth: t, posterior }
    }

    #[test]
    fn frequentist_examples() {
        let perfect = vec![record(&[1, 0, 1], &[1, 0, 1], 0.0); 3];
        let r = frequentist_rates(&perfect).unwrap();
        assert_eq!(r.pfdr.unwrap().mean, 0.0);
        assert_eq!(r.pfnr.unwrap().mean, 0.0);

        // FDP 1/5 and 2/5
        let two = vec![
            record(&[1, 1, 1, 1, 1], &[1, 1, 1, 1, 0], 0.1),
            record(&[1, 1, 1, 1, 1], &[1, 1, 1, 0, 0], 0.3),
        ];
        let r = frequentist_rates(&two).unwrap();
        let pfdr = r.pfdr.unwrap();
        assert!((pfdr.mean - 0.3).abs() < 1e-12);
        assert!((pfdr.se - 0.1).abs() < 1e-12);
        assert!((r.pbfdr.unwrap().mean - 0.2).abs() < 1e-12);
        assert_eq!(r.pfnr, None);
        assert_eq!(r.n_conditioning_fnr, 0);

        let none = vec![record(&[0, 0], &[1, 0], 0.0); 4];
        let r = frequentist_rates(&none).unwrap();
        assert_eq!(r.pfdr, None);
        assert_eq!(r.mpbfdr, None);
        assert_eq!((r.n_replicates, r.n_conditioning_fdr, r.n_conditioning_fnr), (4, 0, 4));
        assert!((r.pfnr.unwrap().mean - 0.5).abs() < 1e-12);

        assert!(frequentist_rates(&[]).is_err());
    }

    #[test]
    fn exact_exponential_slope() {
        let ns = [100, 200, 400];
        let vals: Vec<f64> = ns.iter().map(|&n| libm::exp(-0.1 * n as f64)).collect();
        let f = rate_fit("m", &vals, &ns, 0.12).unwrap();
        assert!((f.slope + 0.1).abs() < 1e-10);
        assert!((f.bound_slack - 0.02).abs() < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((f.log_rates_over_n[0].unwrap() + 0.1).abs() < 1e-12);
    }

    #[test]
    fn constant_metric_zero_slope() {
        let f = rate_fit("m", &[0.2; 4], &[1, 2, 3, 4], 0.0).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }

    #[test]
    fn zeros_end_the_fit() {
        let f = rate_fit("m", &[0.5, 0.2, 0.05, 0.0], &[250, 500, 1000, 2000], 0.01).unwrap();
        assert_eq!(f.fitted_ns, vec![250, 500, 1000]);
        assert_eq!(f.excluded_ns, vec![2000]);
        assert_eq!(f.log_rates_over_n[3], None);
        assert!(f.slope < 0.0);

        let all = rate_fit("m", &[0.0; 3], &[1, 2, 3], 0.1).unwrap();
        assert!(all.degenerate);
        assert_eq!(all.slope, f64::NEG_INFINITY);

        assert!(matches!(rate_fit("m", &[0.1, 0.0, 0.1], &[1, 2, 3], 0.1), Err(Error::InsufficientData(_))));
        assert!(rate_fit("m", &[0.1, 0.1, 0.1], &[1, 1, 3], 0.1).is_err());
    }

    proptest! {
        #[test]
        fn posterior_rates_in_unit_interval(
            v in proptest::collection::vec(0.0f64..=1.0, 1..12),
            shrink in proptest::collection::vec(0.0f64..=1.0, 12),
            mask in any::<u16>(),
        ) {
            let w: Vec<f64> = v.iter().zip(&shrink).map(|(v, s)| v * s).collect();
            let dh = DecisionConfig::from_mask(mask as u64, v.len());
            let r = posterior_rates(&v, &w, &dh).unwrap();
            for x in [r.fdr_xn, r.fnr_xn, r.mfdr_xn, r.mfnr_xn] {
                prop_assert!(x.is_finite() && (0.0..=1.0).contains(&x));
            }
            prop_assert!(r.mfdr_xn >= r.fdr_xn - 1e-12);
            prop_assert!(r.mfnr_xn <= r.fnr_xn + 1e-12);
        }
    }
}
