//! Posterior mean under an independent normal (Minnesota-style) prior.

use nalgebra::{DMatrix, DVector};

use super::ols::ols_on;
use crate::design::{ArxDesign, ColumnKind};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinnesotaPrior {
    /// Prior standard deviation of the first own lag.
    pub tightness: f64,
    /// Relative tightness of predictor lags, in `(0, 1]`.
    pub cross_shrink: f64,
}

impl Default for MinnesotaPrior {
    fn default() -> Self {
        Self {
            tightness: 0.2,
            cross_shrink: 0.5,
        }
    }
}

fn std_dev(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    (v.map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt()
}

/// Prior variances: `(tightness / lag)^2` for own lags and
/// `(tightness * cross_shrink * s_y / s_x / lag)^2` for predictor lags.
pub fn minnesota_prior_variances(design: &ArxDesign, prior: MinnesotaPrior) -> Result<Vec<f64>> {
    if !(prior.tightness > 0.0) || !prior.tightness.is_finite() {
        return Err(Error::Argument(format!("tightness must be positive, got {}", prior.tightness)));
    }
    if !(prior.cross_shrink > 0.0 && prior.cross_shrink <= 1.0) {
        return Err(Error::Argument(format!("cross_shrink must lie in (0, 1], got {}", prior.cross_shrink)));
    }
    let s_y = std_dev(design.y().iter().copied());
    if !(s_y > 0.0) {
        return Err(Error::Scale("response has zero variance".into()));
    }
    design
        .colmap()
        .iter()
        .enumerate()
        .map(|(j, info)| {
            let lag = info.lag as f64;
            let sd = match info.kind {
                ColumnKind::OwnLag => prior.tightness / lag,
                ColumnKind::Predictor => {
                    let s_x = std_dev(design.x().column(j).iter().copied());
                    if !(s_x > 0.0) {
                        return Err(Error::Scale(format!(
                            "predictor column {} at lag {} has zero variance",
                            info.source, info.lag
                        )));
                    }
                    prior.tightness * prior.cross_shrink * s_y / s_x / lag
                }
            };
            Ok(sd * sd)
        })
        .collect()
}

/// `(X'X/n + D)^-1 X'y/n` with `D = diag(noise_var / prior_var) / n`.
pub fn shrinkage_posterior_mean(design: &ArxDesign, prior_var: &[f64], noise_var: f64) -> Result<Vec<f64>> {
    let (x, y) = (design.x(), design.y());
    let m = x.ncols();
    if prior_var.len() != m {
        return Err(Error::Dimension(format!("{} prior variances for {m} coefficients", prior_var.len())));
    }
    let nf = x.nrows() as f64;
    let mut a = x.tr_mul(x) / nf;
    for (i, v) in prior_var.iter().enumerate() {
        a[(i, i)] += noise_var / v / nf;
    }
    let rhs = x.tr_mul(y) / nf;
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numeric("posterior precision is not positive definite".into()))?;
    Ok(chol.solve(&rhs).as_slice().to_vec())
}

/// Noise variance from an OLS autoregression on the own-lag columns, or the
/// response variance when that regression does not exist.
fn noise_variance(design: &ArxDesign) -> f64 {
    let own: Vec<usize> = (0..design.ncols())
        .filter(|&j| design.colmap()[j].kind == ColumnKind::OwnLag)
        .collect();
    let xo: DMatrix<f64> = design.x().select_columns(&own);
    match ols_on(&xo, design.y()) {
        Ok(fit) if fit.sigma2 > 0.0 => fit.sigma2,
        _ => {
            let y: &DVector<f64> = design.y();
            let s = std_dev(y.iter().copied());
            (s * s).max(f64::MIN_POSITIVE)
        }
    }
}

pub fn minnesota_fit(design: &ArxDesign, prior: MinnesotaPrior) -> Result<Vec<f64>> {
    let var = minnesota_prior_variances(design, prior)?;
    shrinkage_posterior_mean(design, &var, noise_variance(design))
}
