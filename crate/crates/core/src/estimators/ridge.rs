use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::design::ArxDesign;
use crate::error::{Error, Result};

/// `argmin (1/n) RSS + lambda_ridge * sum(beta^2)` on the design as given.
pub fn ridge_fit(design: &ArxDesign, lambda_ridge: f64) -> Result<Vec<f64>> {
    if !(lambda_ridge > 0.0) || !lambda_ridge.is_finite() {
        return Err(Error::Argument(format!("ridge penalty must be positive and finite, got {lambda_ridge}")));
    }
    let path = RidgePath::new(design.x(), design.y());
    Ok(path.coefficients(lambda_ridge).as_slice().to_vec())
}

/// Ridge solutions for many penalties from the thin decomposition
/// `X = U S V'`: `beta(l) = V diag(s / (s^2 + n l)) U'y`. The decomposition is
/// read off the eigenvectors of the smaller of `X'X` and `XX'`.
pub(crate) struct RidgePath {
    n: usize,
    yy: f64,
    v: DMatrix<f64>,
    sv: Vec<f64>,
    uty: Vec<f64>,
}

impl RidgePath {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        Self::with_gram(x, y, None)
    }

    /// `xtx` is `X'X` when the caller already has it.
    pub fn with_gram(x: &DMatrix<f64>, y: &DVector<f64>, xtx: Option<&DMatrix<f64>>) -> Self {
        let (n, m) = x.shape();
        let yy = y.norm_squared();
        if n == 0 || m == 0 {
            return Self { n, yy, v: DMatrix::zeros(m, 0), sv: Vec::new(), uty: Vec::new() };
        }
        let (gram, wide) = if m <= n { (xtx.cloned().unwrap_or_else(|| x.tr_mul(x)), false) } else { (x * x.transpose(), true) };
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > top * 1e-13 && eig.eigenvalues[i] > 0.0)
            .collect();
        let sv: Vec<f64> = keep.iter().map(|&i| eig.eigenvalues[i].sqrt()).collect();
        let vecs = eig.eigenvectors.select_columns(&keep);
        let (v, uty) = if wide {
            // eigenvectors are U; V = X'U / s
            let mut v = x.tr_mul(&vecs);
            for (j, &s) in sv.iter().enumerate() {
                v.column_mut(j).unscale_mut(s);
            }
            (v, vecs.tr_mul(y).as_slice().to_vec())
        } else {
            // eigenvectors are V; U'y = V'X'y / s
            let xty = x.tr_mul(y);
            let uty = vecs.tr_mul(&xty).iter().zip(&sv).map(|(z, s)| z / s).collect();
            (vecs, uty)
        };
        Self { n, yy, v, sv, uty }
    }

    /// Largest eigenvalue of `X'X / n`.
    pub fn top_eigenvalue(&self) -> f64 {
        let s = self.sv.iter().fold(0.0f64, |a, &b| a.max(b));
        s * s / self.n as f64
    }

    pub fn coefficients(&self, lambda: f64) -> DVector<f64> {
        let nl = self.n as f64 * lambda;
        let d = DVector::from_iterator(
            self.sv.len(),
            self.sv.iter().zip(&self.uty).map(|(&s, &z)| if s > 0.0 { s * z / (s * s + nl) } else { 0.0 }),
        );
        &self.v * d
    }

    /// (RSS, trace of the hat matrix).
    pub fn rss_df(&self, lambda: f64) -> (f64, f64) {
        let nl = self.n as f64 * lambda;
        let mut explained = 0.0;
        let mut df = 0.0;
        for (&s, &z) in self.sv.iter().zip(&self.uty) {
            let h = s * s / (s * s + nl);
            explained += (2.0 * h - h * h) * z * z;
            df += h;
        }
        ((self.yy - explained).max(0.0), df)
    }
}

#[derive(Clone, Debug)]
pub struct RidgeSelection {
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub df: f64,
    pub bic: f64,
}

/// Ridge penalty chosen by BIC (df = trace of the hat matrix) over a
/// `grid_size`-point log grid spanning `1e-4 .. 10` times the top eigenvalue
/// of `X'X / n`. Penalties whose effective degrees of freedom exceed `max_df`
/// are skipped unless none qualifies, in which case the largest penalty wins.
pub fn ridge_bic(x: &DMatrix<f64>, y: &DVector<f64>, grid_size: usize, max_df: f64) -> RidgeSelection {
    let path = RidgePath::new(x, y);
    ridge_bic_on(&path, grid_size, max_df)
}

pub(crate) fn ridge_bic_on(path: &RidgePath, grid_size: usize, max_df: f64) -> RidgeSelection {
    let top = path.top_eigenvalue().max(f64::MIN_POSITIVE);
    let (lo, hi) = ((top * 1e-4).ln(), (top * 10.0).ln());
    let grid_size = grid_size.max(2);
    let nf = path.n as f64;
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..grid_size {
        let lambda = (hi + (lo - hi) * i as f64 / (grid_size - 1) as f64).exp();
        let (rss, df) = path.rss_df(lambda);
        if df > max_df && best.is_some() {
            continue;
        }
        let bic = nf * (rss / nf).max(f64::MIN_POSITIVE).ln() + df * nf.ln();
        if best.is_none_or(|(_, b, _)| bic < b) {
            best = Some((lambda, bic, df));
        }
    }
    let (lambda, bic, df) = best.expect("grid is nonempty");
    RidgeSelection {
        lambda,
        beta: path.coefficients(lambda).as_slice().to_vec(),
        df,
        bic,
    }
}
