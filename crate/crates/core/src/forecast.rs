//! Rolling-window one-step-ahead forecasts.
//!
//! Forecasting is a two-step procedure. A selection technique first decides
//! which predictor blocks to keep; an estimator is then fitted on the kept
//! blocks only. For every window end `t = S..T-1` only rows `t-S..t-1`
//! (0-based, `S` rows) are used, and the forecast target is row `t`.
//! Accuracy is the mean absolute forecast error over all windows.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::design::{build_design, ArxDesign};
use crate::error::{Error, Result};
use crate::estimators::{
    ar_order_bic, factor_fit, minnesota_fit, ols_fit, ols_order_bic, select_arx, MinnesotaPrior,
};
use crate::inference::{blocks_with_nonzero, granger_lasso_tests, wald_test_selection, TestSettings};
use crate::panel::{center, BlockId, BlockStructure, TimeSeriesPanel};
use crate::seed::{self, tags};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    Wald,
    GlassoSelection,
    GlassoTest,
}

impl Selection {
    pub const ALL: [Selection; 4] = [Selection::All, Selection::Wald, Selection::GlassoSelection, Selection::GlassoTest];

    pub fn label(self) -> &'static str {
        match self {
            Selection::All => "all",
            Selection::Wald => "wald",
            Selection::GlassoSelection => "glasso_selection",
            Selection::GlassoTest => "glasso_test",
        }
    }

    fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Selection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Selection::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| Error::Argument(format!("unknown selection technique {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ols,
    AdaptiveLasso,
    Minnesota,
    Factor,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::Ols, Estimator::AdaptiveLasso, Estimator::Minnesota, Estimator::Factor];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Ols => "ols",
            Estimator::AdaptiveLasso => "adaptive_lasso",
            Estimator::Minnesota => "minnesota",
            Estimator::Factor => "factor",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| Error::Argument(format!("unknown estimator {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForecastSettings {
    /// Window length `S`.
    pub window: usize,
    /// Significance level of the test-based selections.
    pub alpha: f64,
    /// Lag-order bound and bootstrap budget of every per-window fit and test.
    pub test: TestSettings,
    pub minnesota: MinnesotaPrior,
    /// Run the selection on the first window only and reuse it.
    pub select_once: bool,
}

impl ForecastSettings {
    /// `S = floor(0.9 T)`, 1% tests, 200 bootstrap replicates per window.
    pub fn for_length(t: usize) -> Self {
        Self {
            window: (0.9 * t as f64).floor() as usize,
            alpha: 0.01,
            test: TestSettings {
                b: 200,
                ..TestSettings::default()
            },
            minnesota: MinnesotaPrior::default(),
            select_once: false,
        }
    }
}

/// Forecasts of one (selection, estimator) pair. `forecasts` and `mafe` are
/// `None` for cells that are not computable (`NA`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastCell {
    pub selection: Selection,
    pub estimator: Estimator,
    pub mafe: Option<f64>,
    pub forecasts: Option<Vec<f64>>,
    /// Why the cell is `NA`.
    pub note: Option<String>,
}

/// Blocks kept by one selection technique in one window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSelection {
    /// Raw row index of the forecast target.
    pub target_row: usize,
    pub selection: Selection,
    /// `None` when the selection is not computable.
    pub blocks: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub target: String,
    pub window: usize,
    /// `y[S..T]`.
    pub actual: Vec<f64>,
    pub cells: Vec<ForecastCell>,
    pub selections: Vec<WindowSelection>,
}

/// `mean |forecast - actual|`.
pub fn mafe(forecasts: &[f64], actual: &[f64]) -> f64 {
    forecasts.iter().zip(actual).map(|(f, a)| (f - a).abs()).sum::<f64>() / forecasts.len() as f64
}

impl ForecastReport {
    pub fn cell(&self, selection: Selection, estimator: Estimator) -> Option<&ForecastCell> {
        self.cells.iter().find(|c| c.selection == selection && c.estimator == estimator)
    }

    pub fn mafe(&self, selection: Selection, estimator: Estimator) -> Option<f64> {
        self.cell(selection, estimator).and_then(|c| c.mafe)
    }

    /// Rows are selections, columns estimators; `NA` for missing cells.
    pub fn write_grid_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut selections: Vec<Selection> = self.cells.iter().map(|c| c.selection).collect();
        selections.dedup();
        let mut estimators: Vec<Estimator> = Vec::new();
        for c in &self.cells {
            if !estimators.contains(&c.estimator) {
                estimators.push(c.estimator);
            }
        }
        let mut wtr = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Numeric(e.to_string());
        let mut header = vec!["selection".to_string()];
        header.extend(estimators.iter().map(|e| e.label().to_string()));
        wtr.write_record(&header).map_err(err)?;
        for s in selections {
            let mut row = vec![s.label().to_string()];
            row.extend(
                estimators
                    .iter()
                    .map(|&e| self.mafe(s, e).map_or_else(|| "NA".to_string(), |v| v.to_string())),
            );
            wtr.write_record(&row).map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::Numeric(e.to_string()))
    }

    /// Long format: `target_row, actual, selection, estimator, forecast`.
    pub fn write_paths_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Numeric(e.to_string());
        wtr.write_record(["target_row", "actual", "selection", "estimator", "forecast"])
            .map_err(err)?;
        for c in &self.cells {
            for (i, a) in self.actual.iter().enumerate() {
                let f = c.forecasts.as_ref().map_or_else(|| "NA".to_string(), |v| v[i].to_string());
                wtr.write_record([
                    (self.window + i).to_string(),
                    a.to_string(),
                    c.selection.label().to_string(),
                    c.estimator.label().to_string(),
                    f,
                ])
                .map_err(err)?;
            }
        }
        wtr.flush().map_err(|e| Error::Numeric(e.to_string()))
    }

    /// One JSON object per (window, selection).
    pub fn write_selection_log<W: Write>(&self, mut writer: W) -> Result<()> {
        for s in &self.selections {
            let line = serde_json::to_string(s).map_err(|e| Error::Numeric(e.to_string()))?;
            writeln!(writer, "{line}").map_err(|e| Error::Numeric(e.to_string()))?;
        }
        Ok(())
    }
}

/// Centered data of one window.
struct Window {
    y: TimeSeriesPanel,
    x: TimeSeriesPanel,
    y_mean: f64,
}

impl Window {
    fn new(y: &TimeSeriesPanel, x: &TimeSeriesPanel, start: usize, end: usize) -> Self {
        let (yc, ym) = center(&y.rows(start, end));
        let (xc, _) = center(&x.rows(start, end));
        Self {
            y: yc,
            x: xc,
            y_mean: ym[0],
        }
    }
}

fn select_blocks(
    w: &Window,
    blocks: &BlockStructure,
    selection: Selection,
    settings: &ForecastSettings,
    seed: u64,
) -> Result<Vec<BlockId>> {
    let p_max = settings.test.p_max;
    match selection {
        Selection::All => Ok(blocks.ids().collect()),
        Selection::Wald => wald_test_selection(&w.y, &w.x, blocks, settings.alpha, p_max),
        Selection::GlassoSelection => {
            let sel = select_arx(&w.y, &w.x, blocks, p_max, &settings.test.pipeline)?;
            Ok(blocks_with_nonzero(&sel.design, &sel.fit.beta))
        }
        Selection::GlassoTest => {
            let all: Vec<BlockId> = blocks.ids().collect();
            Ok(granger_lasso_tests(&w.y, &w.x, blocks, &all, &settings.test, seed)?
                .into_iter()
                .filter(|r| r.mid_p < settings.alpha)
                .map(|r| r.block_id)
                .collect())
        }
    }
}

fn dot(design: &ArxDesign, beta: &[f64], y: &[f64], x: &TimeSeriesPanel) -> f64 {
    design.regressor_row(y, x, y.len()).iter().zip(beta).map(|(a, b)| a * b).sum()
}

/// Centered one-step forecast from the window, using only the kept blocks.
fn estimate(
    w: &Window,
    blocks: &BlockStructure,
    kept: &[BlockId],
    estimator: Estimator,
    settings: &ForecastSettings,
) -> Result<f64> {
    let p_max = settings.test.p_max;
    let (sub_blocks, cols) = blocks.subset(kept)?;
    let xs = w.x.select_columns(&cols);
    let yv = w.y.column(0);
    match estimator {
        Estimator::Ols => {
            // least squares is reported only where the full model is estimable
            let s = w.y.nrows();
            if s <= 1 + (1 + blocks.n_columns()) {
                return Err(Error::NotComputable(format!(
                    "{} predictors with a window of {s} rows",
                    blocks.n_columns()
                )));
            }
            let p = ols_order_bic(&w.y, &xs, &sub_blocks, p_max)?;
            let design = build_design(&w.y, &xs, p, &sub_blocks)?;
            let fit = ols_fit(&design)?;
            Ok(dot(&design, &fit.beta, &yv, &xs))
        }
        Estimator::AdaptiveLasso => {
            let sel = select_arx(&w.y, &xs, &sub_blocks, p_max, &settings.test.pipeline)?;
            Ok(dot(&sel.design, &sel.fit.beta, &yv, &xs))
        }
        Estimator::Minnesota => {
            let p = ar_order_bic(&w.y, p_max)?;
            let design = build_design(&w.y, &xs, p, &sub_blocks)?;
            let beta = minnesota_fit(&design, settings.minnesota)?;
            Ok(dot(&design, &beta, &yv, &xs))
        }
        Estimator::Factor => {
            let p = ar_order_bic(&w.y, p_max)?;
            if xs.ncols() >= 2 {
                match factor_fit(&xs, &yv, p) {
                    Ok(fit) => return Ok(fit.forecast_next(&yv)),
                    Err(Error::DegeneratePanel(msg)) => return Err(Error::NotComputable(msg)),
                    Err(e) => return Err(e),
                }
            }
            // fewer than two kept series: regress on them directly
            let design = build_design(&w.y, &xs, p, &sub_blocks)?;
            let fit = ols_fit(&design)?;
            Ok(dot(&design, &fit.beta, &yv, &xs))
        }
    }
}

/// Forecasts for every listed (selection, estimator) pair. Each selection runs
/// once per window and is shared by all estimators; its seed depends only on
/// `(seed, window, selection)`, so any cell equals a separate
/// [`rolling_forecast`] call with the same seed.
pub fn forecast_grid(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    blocks: &BlockStructure,
    selections: &[Selection],
    estimators: &[Estimator],
    settings: &ForecastSettings,
    seed: u64,
) -> Result<ForecastReport> {
    let t = y.nrows();
    let s = settings.window;
    if y.ncols() != 1 || x.nrows() != t {
        return Err(Error::Dimension("response must be one column aligned with the predictors".into()));
    }
    if s == 0 || s >= t {
        return Err(Error::Dimension(format!("window {s} must lie in 1..{t}")));
    }
    let yv = y.column(0);
    let actual = yv[s..].to_vec();
    let mut paths: Vec<Vec<std::result::Result<f64, String>>> = vec![Vec::new(); selections.len() * estimators.len()];
    let mut log = Vec::new();
    let mut first_selection: Vec<Option<std::result::Result<Vec<BlockId>, String>>> = vec![None; selections.len()];

    for end in s..t {
        let w = Window::new(y, x, end - s, end);
        for (si, &sel) in selections.iter().enumerate() {
            let kept = match (&first_selection[si], settings.select_once) {
                (Some(prev), true) => prev.clone(),
                _ => {
                    let sel_seed = seed::derive(seed, &[tags::WINDOW, end as u64, sel.code()]);
                    match select_blocks(&w, blocks, sel, settings, sel_seed) {
                        Ok(k) => Ok(k),
                        Err(e) if e.is_not_computable() => Err(e.to_string()),
                        Err(e) => return Err(e),
                    }
                }
            };
            if first_selection[si].is_none() {
                first_selection[si] = Some(kept.clone());
            }
            log.push(WindowSelection {
                target_row: end,
                selection: sel,
                blocks: kept
                    .as_ref()
                    .ok()
                    .map(|ids| ids.iter().map(|&b| blocks.name(b).to_string()).collect()),
            });
            for (ei, &est) in estimators.iter().enumerate() {
                let value = match &kept {
                    Err(msg) => Err(format!("selection: {msg}")),
                    Ok(ids) => match estimate(&w, blocks, ids, est, settings) {
                        Ok(v) => Ok(v + w.y_mean),
                        Err(e) if e.is_not_computable() => Err(e.to_string()),
                        Err(e) => return Err(e),
                    },
                };
                paths[si * estimators.len() + ei].push(value);
            }
        }
    }

    let mut cells = Vec::with_capacity(paths.len());
    for (si, &sel) in selections.iter().enumerate() {
        for (ei, &est) in estimators.iter().enumerate() {
            let path = &paths[si * estimators.len() + ei];
            let cell = match path.iter().find_map(|v| v.as_ref().err()) {
                Some(msg) => ForecastCell {
                    selection: sel,
                    estimator: est,
                    mafe: None,
                    forecasts: None,
                    note: Some(msg.clone()),
                },
                None => {
                    let f: Vec<f64> = path.iter().map(|v| *v.as_ref().expect("checked")).collect();
                    ForecastCell {
                        selection: sel,
                        estimator: est,
                        mafe: Some(mafe(&f, &actual)),
                        forecasts: Some(f),
                        note: None,
                    }
                }
            };
            cells.push(cell);
        }
    }
    Ok(ForecastReport {
        target: y.labels()[0].clone(),
        window: s,
        actual,
        cells,
        selections: log,
    })
}

/// Rolling forecasts of a single (selection, estimator) pair.
pub fn rolling_forecast(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    blocks: &BlockStructure,
    selection: Selection,
    estimator: Estimator,
    settings: &ForecastSettings,
    seed: u64,
) -> Result<ForecastReport> {
    forecast_grid(y, x, blocks, &[selection], &[estimator], settings, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip() {
        for s in Selection::ALL {
            assert_eq!(s.label().parse::<Selection>().unwrap(), s);
        }
        for e in Estimator::ALL {
            assert_eq!(e.label().parse::<Estimator>().unwrap(), e);
        }
        assert!("nope".parse::<Estimator>().is_err());
    }

    #[test]
    fn mafe_definition() {
        assert_eq!(mafe(&[1.0, 2.0, 3.0], &[1.5, 2.0, 1.0]), (0.5 + 0.0 + 2.0) / 3.0);
    }

    #[test]
    fn default_window_is_ninety_percent() {
        assert_eq!(ForecastSettings::for_length(100).window, 90);
        assert_eq!(ForecastSettings::for_length(40).window, 36);
    }
}
