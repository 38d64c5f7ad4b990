//! Fitting procedures for the stacked ARX regression.

mod factor;
mod lasso;
mod minnesota;
mod ols;
mod ridge;
mod select;

pub use factor::{factor_fit, FactorFit};
pub use lasso::{
    adaptive_lasso_fit, bic_path, compute_adaptive_weights, lambda_grid, LassoSolver, PenalizedFit, SolverSettings,
    WEIGHT_FLOOR,
};
pub use minnesota::{minnesota_fit, minnesota_prior_variances, shrinkage_posterior_mean, MinnesotaPrior};
pub use ols::{ar_order_bic, ols_fit, ols_order_bic, OlsFit};
pub use ridge::{ridge_bic, ridge_fit, RidgeSelection};
pub use select::{fit_adaptive_lasso, select_arx, select_arx_with, ArxSelection, PipelineSettings};

use nalgebra::DMatrix;

/// Column scaling by root mean square (the design has no intercept, so
/// columns are not re-centered). All-zero columns keep scale 1.
pub(crate) struct Standardized {
    pub x: DMatrix<f64>,
    pub scale: Vec<f64>,
}

pub(crate) fn standardize(x: &DMatrix<f64>) -> Standardized {
    let n = x.nrows().max(1) as f64;
    let mut xs = x.clone();
    let mut scale = Vec::with_capacity(x.ncols());
    for mut col in xs.column_iter_mut() {
        let rms = (col.norm_squared() / n).sqrt();
        let s = if rms > 0.0 && rms.is_finite() { rms } else { 1.0 };
        col /= s;
        scale.push(s);
    }
    Standardized { x: xs, scale }
}

/// Natural-log BIC with effective sample size `n`.
pub(crate) fn bic(rss: f64, n: usize, df: usize) -> f64 {
    let nf = n as f64;
    let mse = (rss / nf).max(f64::MIN_POSITIVE);
    nf * mse.ln() + df as f64 * nf.ln()
}
