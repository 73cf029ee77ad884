use alloc::format;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::{self, stream};

/// How the non-intercept covariate columns are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignGenerator {
    /// iid `N(0, scale²)` truncated to `[-3·scale, 3·scale]`, then centred.
    IidGaussianBounded,
    /// As above, then Gram-Schmidt orthogonalised so that `Z'Z/n` is diagonal
    /// with entries `1` (intercept) and `scale²` (covariates).
    Orthogonalized,
}

/// An `n × (m+1)` covariate matrix whose column 0 is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateDesign {
    pub z: DMatrix<f64>,
    pub centered: bool,
    pub generator: DesignGenerator,
    pub scale: f64,
    pub seed: u64,
    /// Upper bound on the largest eigenvalue of `Z'Z/n`, when the generator
    /// guarantees one.
    pub max_eigenvalue_bound: Option<f64>,
}

impl CovariateDesign {
    /// Wraps an explicit matrix. Column 0 must be all ones.
    pub fn from_matrix(z: DMatrix<f64>) -> Result<Self> {
        if z.nrows() == 0 || z.ncols() == 0 {
            return Err(invalid("design must be non-empty"));
        }
        if z.column(0).iter().any(|&v| v != 1.0) {
            return Err(invalid("design column 0 must be the intercept (all ones)"));
        }
        let centered = (1..z.ncols()).all(|j| {
            libm::fabs(z.column(j).sum()) <= 1e-10 * z.nrows() as f64
        });
        Ok(Self {
            z,
            centered,
            generator: DesignGenerator::IidGaussianBounded,
            scale: 1.0,
            seed: 0,
            max_eigenvalue_bound: None,
        })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    /// Number of non-intercept covariates.
    pub fn m(&self) -> usize {
        self.z.ncols() - 1
    }

    pub fn row(&self, t: usize) -> DVector<f64> {
        self.z.row(t).transpose()
    }

    /// `Z'Z / n`.
    pub fn gram_over_n(&self) -> DMatrix<f64> {
        self.z.transpose() * &self.z / self.n() as f64
    }

    /// Largest eigenvalue of `Z'Z / n` by dense symmetric eigendecomposition.
    pub fn max_gram_eigenvalue(&self) -> f64 {
        let eig = SymmetricEigen::new(self.gram_over_n());
        eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn truncated_normal(rng: &mut seed::Rng, scale: f64) -> f64 {
    loop {
        let u: f64 = StandardNormal.sample(rng);
        if libm::fabs(u) <= 3.0 {
            return u * scale;
        }
    }
}

/// Generates a covariate design with `n` rows and `m + 1` columns.
pub fn generate_design(
    n: usize,
    m: usize,
    generator: DesignGenerator,
    scale: f64,
    seed: u64,
) -> Result<CovariateDesign> {
    if n < 2 {
        return Err(invalid("design needs n >= 2"));
    }
    if !(scale > 0.0) {
        return Err(invalid("design scale must be positive"));
    }
    if generator == DesignGenerator::Orthogonalized && m + 1 > n {
        return Err(Error::InfeasibleDesign(format!(
            "cannot orthogonalise {} columns with {} rows",
            m + 1,
            n
        )));
    }
    let mut rng = seed::rng_from(seed, &[stream::DESIGN]);
    let mut z = DMatrix::<f64>::zeros(n, m + 1);
    z.column_mut(0).fill(1.0);
    for j in 1..=m {
        for t in 0..n {
            z[(t, j)] = truncated_normal(&mut rng, scale);
        }
        let mean = z.column(j).mean();
        z.column_mut(j).add_scalar_mut(-mean);
    }

    let mut bound = None;
    if generator == DesignGenerator::Orthogonalized {
        let target = scale * crate::math::sqrt(n as f64);
        for j in 1..=m {
            for k in 0..j {
                let proj = z.column(j).dot(&z.column(k)) / z.column(k).norm_squared();
                let col_k: DVector<f64> = z.column(k).into_owned();
                z.column_mut(j).axpy(-proj, &col_k, 1.0);
            }
            let norm = z.column(j).norm();
            if !(norm > 1e-12) {
                return Err(Error::InfeasibleDesign(format!(
                    "column {j} is numerically dependent on earlier columns"
                )));
            }
            z.column_mut(j).scale_mut(target / norm);
        }
        bound = Some(if m == 0 { 1.0 } else { f64::max(1.0, scale * scale) });
    }

    Ok(CovariateDesign {
        z,
        centered: true,
        generator,
        scale,
        seed,
        max_eigenvalue_bound: bound,
    })
}

/// Sample correlation of two columns; 0 when either column is constant.
pub(crate) fn column_correlation(z: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let n = z.nrows() as f64;
    let ma = z.column(a).sum() / n;
    let mb = z.column(b).sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for t in 0..z.nrows() {
        let da = z[(t, a)] - ma;
        let db = z[(t, b)] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / crate::math::sqrt(saa * sbb)
}
