//! Diffusion-index forecasting: principal components of the standardized
//! predictors, factor count by the largest ratio of consecutive eigenvalues,
//! then a regression of the response on its own lags and factor lags.

use nalgebra::{DMatrix, DVector, SVD};

use super::ols::ols_on;
use crate::error::{Error, Result};
use crate::panel::TimeSeriesPanel;

/// Eigenvalues below this fraction of the largest count as zero.
const POSITIVE_EIGEN_TOL: f64 = 1e-10;
const FALLBACK_RIDGE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct FactorFit {
    pub r: usize,
    pub p: usize,
    /// Eigenvalues of the predictor correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// `k x r`.
    pub loadings: DMatrix<f64>,
    /// Principal-component scores for every panel row, `T x r`.
    pub factors: DMatrix<f64>,
    /// Own lags `1..=p`, then factor lags (lag-major, factor-minor).
    pub forecast_coeffs: Vec<f64>,
    /// Whether the forecast regression fell back to a tiny ridge penalty.
    pub ridge_fallback: bool,
}

impl FactorFit {
    fn regressors(&self, y: &[f64], t: usize) -> Vec<f64> {
        let mut row = Vec::with_capacity((1 + self.r) * self.p);
        for lag in 1..=self.p {
            row.push(y[t - lag]);
        }
        for lag in 1..=self.p {
            for f in 0..self.r {
                row.push(self.factors[(t - lag, f)]);
            }
        }
        row
    }

    /// One-step-ahead forecast of `y[T]` given the fitted sample `y[0..T]`.
    pub fn forecast_next(&self, y: &[f64]) -> f64 {
        let row = self.regressors(y, y.len());
        row.iter().zip(&self.forecast_coeffs).map(|(a, b)| a * b).sum()
    }
}

pub fn factor_fit(x: &TimeSeriesPanel, y: &[f64], p: usize) -> Result<FactorFit> {
    let (t, k) = (x.nrows(), x.ncols());
    if k < 2 {
        return Err(Error::Argument(format!("factor model needs at least 2 predictors, got {k}")));
    }
    if y.len() != t {
        return Err(Error::Dimension(format!("response has {} rows, predictors {t}", y.len())));
    }
    if p == 0 || t <= p + 1 {
        return Err(Error::Dimension(format!("T = {t} must exceed p + 1 = {}", p + 1)));
    }
    let tf = t as f64;
    let mut z = x.values().clone();
    for mut col in z.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / tf).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    let svd = SVD::new(z.clone(), false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut eigenvalues: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].powi(2) / tf).collect();
    eigenvalues.resize(k, 0.0);
    let top = eigenvalues[0];
    let n_pos = eigenvalues.iter().filter(|&&e| e > POSITIVE_EIGEN_TOL * top && e > 0.0).count();
    if n_pos < 2 {
        return Err(Error::DegeneratePanel(format!(
            "{n_pos} positive eigenvalue(s) in the predictor correlation matrix"
        )));
    }
    // ratios only between positive eigenvalues; j = 1..=min(k-1, n_pos-1)
    let r = (1..n_pos.min(k))
        .map(|j| (j, eigenvalues[j - 1] / eigenvalues[j]))
        .fold((1, f64::NEG_INFINITY), |best, (j, ratio)| if ratio > best.1 { (j, ratio) } else { best })
        .0;
    let loadings = DMatrix::from_fn(k, r, |i, f| v_t[(order[f], i)]);
    let factors = &z * &loadings;

    let n = t - p;
    let m = (1 + r) * p;
    let mut fit = FactorFit {
        r,
        p,
        eigenvalues,
        loadings,
        factors,
        forecast_coeffs: Vec::new(),
        ridge_fallback: false,
    };
    let design = DMatrix::from_fn(n, m, |i, j| fit.regressors(y, p + i)[j]);
    let target = DVector::from_column_slice(&y[p..]);
    fit.forecast_coeffs = match ols_on(&design, &target) {
        Ok(ols) => ols.beta,
        Err(e) if e.is_not_computable() => {
            fit.ridge_fallback = true;
            let nf = n as f64;
            let a = design.tr_mul(&design) / nf + DMatrix::identity(m, m) * FALLBACK_RIDGE;
            let rhs = design.tr_mul(&target) / nf;
            a.cholesky()
                .ok_or_else(|| Error::Numeric("factor regression is singular".into()))?
                .solve(&rhs)
                .as_slice()
                .to_vec()
        }
        Err(e) => return Err(e),
    };
    Ok(fit)
}
