//! The full penalized pipeline: ridge-BIC weights, a warm-started lasso path
//! with BIC choice of the penalty, and BIC choice of the lag order.

use nalgebra::DVector;

use super::lasso::{compute_adaptive_weights, lambda_grid, LassoSolver, PenalizedFit, SolverSettings};
use super::ridge::{ridge_bic_on, RidgePath};
use super::standardize;
use crate::design::{build_design, build_design_from, ArxDesign};
use crate::error::{Error, Result};
use crate::panel::{BlockStructure, TimeSeriesPanel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineSettings {
    pub ridge_grid: usize,
    pub lambda_grid: usize,
    pub lambda_min_ratio: f64,
    /// Candidate fits (ridge and lasso) may use at most this fraction of the
    /// sample size in degrees of freedom; the lasso path stops once exceeded.
    pub max_df_fraction: f64,
    pub solver: SolverSettings,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            ridge_grid: 20,
            lambda_grid: 50,
            lambda_min_ratio: 1e-3,
            max_df_fraction: 0.5,
            solver: SolverSettings::default(),
        }
    }
}

/// Adaptive lasso on a fixed design: weights from the BIC-chosen ridge fit on
/// standardized columns, penalty chosen by BIC along the default grid.
///
/// BIC diverges to minus infinity as a fit approaches interpolation, which
/// happens whenever the design has more columns than rows, so only fits with
/// at most `max_df_fraction * n` degrees of freedom compete.
pub fn fit_adaptive_lasso(design: &ArxDesign, settings: &PipelineSettings) -> Result<PenalizedFit> {
    let y = design.y();
    let st = standardize(design.x());
    let max_df = settings.max_df_fraction * design.nrows() as f64;
    let xtx = st.x.tr_mul(&st.x);
    let ridge = ridge_bic_on(&RidgePath::with_gram(&st.x, y, Some(&xtx)), settings.ridge_grid, max_df);
    let weights = compute_adaptive_weights(&ridge.beta);
    let mut solver = LassoSolver::from_standardized(st.x, st.scale, y.clone(), weights, Some(xtx));
    let grid = lambda_grid(solver.lambda_max(), settings.lambda_grid, settings.lambda_min_ratio);

    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    for &lambda in &grid {
        solver.set_lambda(lambda);
        solver.solve(&settings.solver);
        if solver.df() as f64 > max_df && best.is_some() {
            break;
        }
        let b = solver.bic_estimate();
        if best.as_ref().is_none_or(|(bb, _, _)| b < *bb) {
            best = Some((b, lambda, solver.standardized_beta().clone()));
        }
    }
    let (_, lambda, beta) = best.expect("grid is nonempty");
    solver.set_lambda(lambda);
    solver.set_standardized_beta(&beta);
    Ok(solver.to_fit(design.x()))
}

#[derive(Clone, Debug)]
pub struct ArxSelection {
    pub p: usize,
    pub fit: PenalizedFit,
    /// Full-sample design at the selected order (`T - p` rows).
    pub design: ArxDesign,
}

pub fn select_arx(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    blocks: &BlockStructure,
    p_max: usize,
    settings: &PipelineSettings,
) -> Result<ArxSelection> {
    select_arx_with(y, x, blocks, p_max, settings, |d| Ok(d))
}

/// Lag order by BIC over `1..=p_max`. Every candidate is evaluated on the
/// common sample starting at `p_max` (after `transform`, e.g. dropping a
/// block) so BIC values are comparable; ties go to the smaller order. The
/// chosen order is then refit on its full sample.
pub fn select_arx_with<F>(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    blocks: &BlockStructure,
    p_max: usize,
    settings: &PipelineSettings,
    transform: F,
) -> Result<ArxSelection>
where
    F: Fn(ArxDesign) -> Result<ArxDesign>,
{
    if p_max == 0 {
        return Err(Error::Argument("p_max must be at least 1".into()));
    }
    if y.nrows() <= p_max {
        return Err(Error::Dimension(format!("T = {} must exceed p_max = {p_max}", y.nrows())));
    }
    let mut best: Option<(usize, f64, PenalizedFit, ArxDesign)> = None;
    for p in 1..=p_max {
        let design = transform(build_design_from(y, x, p, blocks, p_max)?)?;
        let fit = fit_adaptive_lasso(&design, settings)?;
        if best.as_ref().is_none_or(|(_, b, _, _)| fit.bic < *b) {
            best = Some((p, fit.bic, fit, design));
        }
    }
    let (p, _, fit, design) = best.expect("p_max >= 1");
    if p == p_max {
        return Ok(ArxSelection { p, fit, design });
    }
    let design = transform(build_design(y, x, p, blocks)?)?;
    let fit = fit_adaptive_lasso(&design, settings)?;
    Ok(ArxSelection { p, fit, design })
}
