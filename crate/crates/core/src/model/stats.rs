use nalgebra::{DMatrix, DVector};

use super::Dataset;

/// Sufficient statistics of the AR(1) regression likelihood.
///
/// Both the Gibbs sampler and the log-likelihood ratio only ever touch the
/// data through these sums.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    pub n: usize,
    /// `Σ x_t²`
    pub sxx: f64,
    /// `Σ x_{t-1}²`
    pub sll: f64,
    /// `Σ x_t x_{t-1}`
    pub sxl: f64,
    /// `Σ z_t x_t`
    pub zx: DVector<f64>,
    /// `Σ z_t x_{t-1}`
    pub zl: DVector<f64>,
    /// `Σ z_t z_t'`
    pub zz: DMatrix<f64>,
}

impl SufficientStats {
    pub fn from_dataset(data: &Dataset) -> Self {
        let z = &data.design.z;
        let p = z.ncols();
        let mut xv = DVector::<f64>::zeros(data.n());
        let mut lv = DVector::<f64>::zeros(data.n());
        let (mut sxx, mut sll, mut sxl) = (0.0, 0.0, 0.0);
        for t in 0..data.n() {
            let x = data.x[t];
            let l = data.lag(t);
            sxx += x * x;
            sll += l * l;
            sxl += x * l;
            xv[t] = x;
            lv[t] = l;
        }
        let zt = z.transpose();
        let zx = &zt * &xv;
        let zl = &zt * &lv;
        let zz = &zt * z;
        debug_assert_eq!(zz.nrows(), p);
        Self { n: data.n(), sxx, sll, sxl, zx, zl, zz }
    }

    /// `Σ (x_t − ρ x_{t-1} − z_t'β)²`.
    pub fn ssr(&self, rho: f64, beta: &DVector<f64>) -> f64 {
        let quad = beta.dot(&(&self.zz * beta));
        let v = self.sxx + rho * rho * self.sll + quad - 2.0 * rho * self.sxl - 2.0 * beta.dot(&self.zx)
            + 2.0 * rho * beta.dot(&self.zl);
        v.max(0.0)
    }
}
