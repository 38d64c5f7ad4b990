//! Block Granger-causality tests.
//!
//! The Granger lasso test compares the Wald statistic of an adaptive-lasso
//! fit, `Q = (R b)' C^-1 (R b)`, against its residual-bootstrap distribution
//! under the null model that omits the tested block:
//!
//! 1. Fit the restricted model (lag order and penalty by BIC) and center its
//!    residuals.
//! 2. For each replicate, resample those residuals with replacement, rebuild
//!    the response recursively from the restricted coefficients with the
//!    predictors held fixed, refit the unrestricted model and record `Q*_b`.
//! 3. Report the mid p-value `(1/B) sum(I(Q*_b > Q) + I(Q*_b = Q) / 2)`.
//!
//! `C` is the sample covariance of the unrestricted block coefficients over
//! `B_cov` separate replicates drawn as in step 2. It is estimated once and
//! shared by `Q` and every `Q*_b`, so both are standardized by the spread of
//! the estimator under the null. [`coef_covariance`] is the same estimate
//! around an arbitrary fitted model.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::design::{build_design, drop_block, ArxDesign, ColumnKind};
use crate::error::{Error, Result};
use crate::estimators::{fit_adaptive_lasso, ols_fit, ols_order_bic, select_arx, select_arx_with, PenalizedFit, PipelineSettings};
use crate::panel::{center, BlockId, BlockStructure, TimeSeriesPanel};
use crate::seed::{self, tags};

/// 0/1 matrix picking the coefficients of one block at every lag. Stored as
/// the selected column indices; row `r` has its single 1 in column
/// `columns[r]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RestrictionMatrix {
    pub block: BlockId,
    pub columns: Vec<usize>,
    pub ncols: usize,
}

impl RestrictionMatrix {
    pub fn nrows(&self) -> usize {
        self.columns.len()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.columns.len(), self.ncols);
        for (row, &c) in self.columns.iter().enumerate() {
            r[(row, c)] = 1.0;
        }
        r
    }

    /// `R beta`.
    pub fn apply(&self, beta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.columns.len(), self.columns.iter().map(|&c| beta[c]))
    }
}

/// Rows are ordered lag-major, then by predictor column.
pub fn restriction_matrix(design: &ArxDesign, block: BlockId) -> Result<RestrictionMatrix> {
    let columns: Vec<usize> = design
        .colmap()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.block == Some(block))
        .map(|(j, _)| j)
        .collect();
    if columns.is_empty() {
        return Err(Error::UnknownBlock(block.to_string()));
    }
    Ok(RestrictionMatrix {
        block,
        columns,
        ncols: design.ncols(),
    })
}

/// `(R beta)' cov^-1 (R beta)` where `cov` is already restricted to the block.
pub fn wald_statistic(r_beta: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if cov.nrows() != r_beta.len() || cov.ncols() != r_beta.len() {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, restricted coefficients have length {}",
            cov.nrows(),
            cov.ncols(),
            r_beta.len()
        )));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("covariance is not positive definite".into()))?;
    let z = chol
        .l()
        .solve_lower_triangular(r_beta)
        .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    Ok(z.norm_squared())
}

/// `(1/B) sum(I(q* > q) + I(q* = q) / 2)`, ties by exact equality.
pub fn mid_p_value(q: f64, q_boot: &[f64]) -> f64 {
    let score: f64 = q_boot
        .iter()
        .map(|&qb| {
            if qb > q {
                1.0
            } else if qb == q {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    score / q_boot.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrangerTestResult {
    pub block: String,
    pub block_id: BlockId,
    pub q: f64,
    pub q_boot: Vec<f64>,
    pub mid_p: f64,
    pub b: usize,
    pub p_used: usize,
    pub lambda_used: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestSettings {
    pub p_max: usize,
    /// Null bootstrap replicates.
    pub b: usize,
    /// Replicates for the coefficient covariance.
    pub b_cov: usize,
    pub pipeline: PipelineSettings,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self {
            p_max: 3,
            b: 500,
            b_cov: 200,
            pipeline: PipelineSettings::default(),
        }
    }
}

impl TestSettings {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::Argument("bootstrap replicate count must be at least 1".into()));
        }
        if self.b_cov < 50 {
            return Err(Error::Argument(format!("covariance replicates must be at least 50, got {}", self.b_cov)));
        }
        Ok(())
    }
}

/// Residual-bootstrap generator for one fitted design. Predictor columns of
/// the design are held fixed; only the response and its own lags change.
struct ResponseGenerator {
    p: usize,
    /// Own-lag coefficient at lag `1..=p` (index `lag - 1`).
    own: Vec<f64>,
    /// Predictor contribution per design row.
    exog: Vec<f64>,
    /// Observed responses at the `p` times before the first design row.
    init: Vec<f64>,
    residuals: Vec<f64>,
}

impl ResponseGenerator {
    fn new(design: &ArxDesign, beta: &[f64], residuals: &[f64]) -> Self {
        let p = design.p();
        let mut own = vec![0.0; p];
        let mut init = vec![0.0; p];
        let mut pred_cols = Vec::new();
        for (j, info) in design.colmap().iter().enumerate() {
            match info.kind {
                ColumnKind::OwnLag => {
                    own[info.lag - 1] = beta[j];
                    // row 0 holds y at time first_target - lag
                    init[p - info.lag] = design.x()[(0, j)];
                }
                ColumnKind::Predictor => pred_cols.push(j),
            }
        }
        let n = design.nrows();
        let exog = (0..n)
            .map(|i| pred_cols.iter().map(|&j| beta[j] * design.x()[(i, j)]).sum())
            .collect();
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        Self {
            p,
            own,
            exog,
            init,
            residuals: residuals.iter().map(|e| e - mean).collect(),
        }
    }

    /// Centered bootstrap response series covering the `p` initial times and
    /// every design row.
    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.exog.len();
        let mut s = Vec::with_capacity(self.p + n);
        s.extend_from_slice(&self.init);
        for i in 0..n {
            let e = self.residuals[rng.random_range(0..self.residuals.len())];
            let ar: f64 = (1..=self.p).map(|lag| self.own[lag - 1] * s[self.p + i - lag]).sum();
            s.push(ar + self.exog[i] + e);
        }
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter_mut().for_each(|v| *v -= mean);
        s
    }
}

/// Replace the response and own-lag columns of `design` by `series`, where
/// `series[p + i]` is the response of design row `i`.
fn with_own_series(design: &ArxDesign, series: &[f64]) -> ArxDesign {
    let p = design.p();
    let n = design.nrows();
    let mut x = design.x().clone();
    for (j, info) in design.colmap().iter().enumerate() {
        if info.kind == ColumnKind::OwnLag {
            for i in 0..n {
                x[(i, j)] = series[p + i - info.lag];
            }
        }
    }
    design.replace_data(DVector::from_column_slice(&series[p..]), x)
}

fn check_finite(series: &[f64]) -> Result<()> {
    if series.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("bootstrap response diverged; fitted autoregression is explosive".into()))
    }
}

/// Full coefficient vectors refitted on `count` residual-bootstrap samples of
/// the fitted model itself.
fn model_bootstrap(
    design: &ArxDesign,
    fit: &PenalizedFit,
    count: usize,
    seed: u64,
    settings: &PipelineSettings,
) -> Result<Vec<Vec<f64>>> {
    let gen = ResponseGenerator::new(design, &fit.beta, &fit.residuals);
    (0..count)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed::derive(seed, &[b as u64]));
            let series = gen.draw(&mut rng);
            check_finite(&series)?;
            Ok(fit_adaptive_lasso(&with_own_series(design, &series), settings)?.beta)
        })
        .collect()
}

/// Sample covariance of `R beta*` over replicates plus `eps * I`, with
/// `eps = 1e-8 * trace / dim` (or `1e-8` when the trace is zero).
fn block_covariance(replicates: &[Vec<f64>], r: &RestrictionMatrix) -> DMatrix<f64> {
    let d = r.nrows();
    let b = replicates.len();
    let rows: Vec<DVector<f64>> = replicates.iter().map(|beta| r.apply(beta)).collect();
    let mean = rows.iter().fold(DVector::zeros(d), |acc, v| acc + v) / b as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in &rows {
        let c = v - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= (b.max(2) - 1) as f64;
    // exact symmetry
    cov = (&cov + cov.transpose()) * 0.5;
    let trace = cov.trace();
    let eps = if trace > 0.0 { 1e-8 * trace / d as f64 } else { 1e-8 };
    for i in 0..d {
        cov[(i, i)] += eps;
    }
    cov
}

/// Bootstrap covariance of the block coefficients of `fit`, from `b_cov`
/// residual-bootstrap refits of the same (unrestricted) model.
pub fn coef_covariance(
    design: &ArxDesign,
    fit: &PenalizedFit,
    block: BlockId,
    b_cov: usize,
    seed: u64,
    settings: &PipelineSettings,
) -> Result<DMatrix<f64>> {
    if b_cov < 50 {
        return Err(Error::Argument(format!("covariance replicates must be at least 50, got {b_cov}")));
    }
    let r = restriction_matrix(design, block)?;
    let reps = model_bootstrap(design, fit, b_cov, seed, settings)?;
    Ok(block_covariance(&reps, &r))
}

/// Unrestricted design and fit at one lag order.
struct Unrestricted {
    design: ArxDesign,
    fit: PenalizedFit,
}

/// Unrestricted refits on `count` bootstrap responses drawn from `gen`.
fn refit_replicates(
    gen: &ResponseGenerator,
    design: &ArxDesign,
    count: usize,
    seed: u64,
    settings: &PipelineSettings,
) -> Result<Vec<Vec<f64>>> {
    (0..count)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed::derive(seed, &[b as u64]));
            let series = gen.draw(&mut rng);
            check_finite(&series)?;
            Ok(fit_adaptive_lasso(&with_own_series(design, &series), settings)?.beta)
        })
        .collect()
}

/// Granger lasso test of one block. Input panels are centered first.
pub fn granger_lasso_test(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    blocks: &BlockStructure,
    block: BlockId,
    settings: &TestSettings,
    seed: u64,
) -> Result<GrangerTestResult> {
    Ok(granger_lasso_tests(y, x, blocks, &[block], settings, seed)?.remove(0))
}

/// Granger lasso tests of several blocks on the same data. The unrestricted
/// fit is shared between blocks whose null model selects the same lag order;
/// results equal separate calls of [`granger_lasso_test`] with the same seed.
pub fn granger_lasso_tests(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    blocks: &BlockStructure,
    which: &[BlockId],
    settings: &TestSettings,
    seed: u64,
) -> Result<Vec<GrangerTestResult>> {
    settings.validate()?;
    let (yc, _) = center(y);
    let (xc, _) = center(x);
    let mut cache: BTreeMap<usize, Unrestricted> = BTreeMap::new();
    let mut out = Vec::with_capacity(which.len());
    for &block in which {
        blocks.block(block)?;
        // step 1: null model
        let restricted = select_arx_with(&yc, &xc, blocks, settings.p_max, &settings.pipeline, |d| drop_block(&d, block))?;
        let p = restricted.p;
        if !cache.contains_key(&p) {
            let design = build_design(&yc, &xc, p, blocks)?;
            let fit = fit_adaptive_lasso(&design, &settings.pipeline)?;
            cache.insert(p, Unrestricted { design, fit });
        }
        let unres = &cache[&p];
        let r = restriction_matrix(&unres.design, block)?;
        let gen = ResponseGenerator::new(&restricted.design, &restricted.fit.beta, &restricted.fit.residuals);
        // covariance of the unrestricted estimator under the null model
        let cov_seed = seed::derive(seed, &[tags::COV_BOOTSTRAP, block.0 as u64]);
        let cov_reps = refit_replicates(&gen, &unres.design, settings.b_cov, cov_seed, &settings.pipeline)?;
        let cov = block_covariance(&cov_reps, &r);
        let q = wald_statistic(&r.apply(&unres.fit.beta), &cov)?;

        // step 2: bootstrap under the null
        let null_seed = seed::derive(seed, &[tags::NULL_BOOTSTRAP, block.0 as u64]);
        let q_boot = refit_replicates(&gen, &unres.design, settings.b, null_seed, &settings.pipeline)?
            .iter()
            .map(|beta| wald_statistic(&r.apply(beta), &cov))
            .collect::<Result<Vec<f64>>>()?;

        // step 3
        out.push(GrangerTestResult {
            block: blocks.name(block).to_string(),
            block_id: block,
            q,
            mid_p: mid_p_value(q, &q_boot),
            q_boot,
            b: settings.b,
            p_used: p,
            lambda_used: unres.fit.lambda,
        });
    }
    Ok(out)
}

/// Blocks with at least one nonzero coefficient at any lag.
pub fn blocks_with_nonzero(design: &ArxDesign, beta: &[f64]) -> Vec<BlockId> {
    let mut out: Vec<BlockId> = Vec::new();
    for (info, &b) in design.colmap().iter().zip(beta) {
        if let Some(id) = info.block {
            if b != 0.0 && !out.contains(&id) {
                out.push(id);
            }
        }
    }
    out.sort();
    out
}

/// Granger lasso selection: blocks the BIC-selected adaptive lasso keeps.
pub fn granger_lasso_selection(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    blocks: &BlockStructure,
    p_max: usize,
    settings: &PipelineSettings,
) -> Result<Vec<BlockId>> {
    let (yc, _) = center(y);
    let (xc, _) = center(x);
    let sel = select_arx(&yc, &xc, blocks, p_max, settings)?;
    Ok(blocks_with_nonzero(&sel.design, &sel.fit.beta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaldTestResult {
    pub block: String,
    pub block_id: BlockId,
    pub q: f64,
    pub df: usize,
    pub p_value: f64,
    pub p_used: usize,
}

/// Classical Wald tests from the least-squares fit, with chi-square p-values.
/// The lag order is chosen by OLS BIC among computable orders.
pub fn wald_tests(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    blocks: &BlockStructure,
    which: &[BlockId],
    p_max: usize,
) -> Result<Vec<WaldTestResult>> {
    let (yc, _) = center(y);
    let (xc, _) = center(x);
    let p = ols_order_bic(&yc, &xc, blocks, p_max)?;
    let design = build_design(&yc, &xc, p, blocks)?;
    let ols = ols_fit(&design)?;
    which
        .iter()
        .map(|&block| {
            let r = restriction_matrix(&design, block)?;
            let cov = ols.cov.select_rows(&r.columns).select_columns(&r.columns);
            let q = wald_statistic(&r.apply(&ols.beta), &cov)?;
            let df = r.nrows();
            let chi = ChiSquared::new(df as f64).map_err(|e| Error::Numeric(e.to_string()))?;
            Ok(WaldTestResult {
                block: blocks.name(block).to_string(),
                block_id: block,
                q,
                df,
                p_value: chi.sf(q),
                p_used: p,
            })
        })
        .collect()
}

/// Blocks whose classical Wald p-value is below `alpha`.
pub fn wald_test_selection(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    blocks: &BlockStructure,
    alpha: f64,
    p_max: usize,
) -> Result<Vec<BlockId>> {
    let all: Vec<BlockId> = blocks.ids().collect();
    Ok(wald_tests(y, x, blocks, &all, p_max)?
        .into_iter()
        .filter(|t| t.p_value < alpha)
        .map(|t| t.block_id)
        .collect())
}
