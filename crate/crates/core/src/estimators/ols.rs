use nalgebra::{DMatrix, DVector};

use super::bic;
use crate::design::{build_design_from, ArxDesign};
use crate::error::{Error, Result};
use crate::panel::{BlockStructure, TimeSeriesPanel};

/// Least squares fit with the classical covariance `sigma2 (X'X)^-1`.
#[derive(Clone, Debug)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub cov: DMatrix<f64>,
    /// `RSS / (n - m)`.
    pub sigma2: f64,
    pub residuals: Vec<f64>,
}

/// Relative pivot size below which the design counts as rank deficient.
const RANK_TOL: f64 = 1e-10;

pub fn ols_fit(design: &ArxDesign) -> Result<OlsFit> {
    ols_on(design.x(), design.y())
}

pub(crate) fn ols_on(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, m) = x.shape();
    if n <= m {
        return Err(Error::NotComputable(format!("{n} observations for {m} coefficients")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_pivot = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max_pivot == 0.0 || r.diagonal().iter().any(|v| v.abs() <= RANK_TOL * max_pivot) {
        return Err(Error::NotComputable("design is rank deficient".into()));
    }
    let qty = qr.q().tr_mul(y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::NotComputable("singular triangular factor".into()))?;
    let resid = y - x * &beta;
    let sigma2 = resid.norm_squared() / (n - m) as f64;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::NotComputable("singular triangular factor".into()))?;
    let cov = (&rinv * rinv.transpose()) * sigma2;
    Ok(OlsFit {
        beta: beta.as_slice().to_vec(),
        cov,
        sigma2,
        residuals: resid.as_slice().to_vec(),
    })
}

/// Lag order of an OLS-fitted ARX model by BIC over `1..=p_max`, on the common
/// sample that starts at `p_max`. Orders whose least-squares fit does not exist
/// are skipped; ties go to the smaller order.
pub fn ols_order_bic(y: &TimeSeriesPanel, x: &TimeSeriesPanel, blocks: &BlockStructure, p_max: usize) -> Result<usize> {
    if p_max == 0 {
        return Err(Error::Argument("p_max must be at least 1".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut last_err = None;
    for p in 1..=p_max {
        let design = build_design_from(y, x, p, blocks, p_max)?;
        match ols_fit(&design) {
            Ok(fit) => {
                let rss: f64 = fit.residuals.iter().map(|r| r * r).sum();
                let b = bic(rss, design.nrows(), design.ncols());
                if best.is_none_or(|(_, bb)| b < bb) {
                    best = Some((p, b));
                }
            }
            Err(e) if e.is_not_computable() => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| last_err.unwrap_or_else(|| Error::NotComputable("no computable lag order".into())))
}

/// Univariate autoregressive order by OLS BIC.
pub fn ar_order_bic(y: &TimeSeriesPanel, p_max: usize) -> Result<usize> {
    let x = TimeSeriesPanel::empty(y.nrows());
    let blocks = BlockStructure::new(vec![], 0)?;
    ols_order_bic(y, &x, &blocks, p_max)
}
