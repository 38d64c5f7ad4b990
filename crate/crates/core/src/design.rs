//! Stacked ARX(p) regression `y = X beta + e`.
//!
//! Columns are ordered lag-major: the `p` own lags first, then for each lag
//! `1..=p` the `k` predictor columns in panel order. The ordering is fixed so
//! that restriction matrices are reproducible.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{BlockId, BlockStructure, TimeSeriesPanel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    OwnLag,
    Predictor,
}

/// Provenance of one design column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub kind: ColumnKind,
    /// 1-based lag.
    pub lag: usize,
    /// Predictor column in the panel the design was built from (0 for own lags).
    pub source: usize,
    pub block: Option<BlockId>,
}

impl ColumnInfo {
    /// Value of this regressor when predicting time `t` (0-based row of the
    /// raw series). Only rows strictly before `t` are read.
    #[inline]
    pub fn value(&self, y: &[f64], x: &TimeSeriesPanel, t: usize) -> f64 {
        match self.kind {
            ColumnKind::OwnLag => y[t - self.lag],
            ColumnKind::Predictor => x.get(t - self.lag, self.source),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ArxDesign {
    y: DVector<f64>,
    x: DMatrix<f64>,
    p: usize,
    colmap: Vec<ColumnInfo>,
    /// Raw-series time index of `y[0]`.
    first_target: usize,
    centered: bool,
}

impl ArxDesign {
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn colmap(&self) -> &[ColumnInfo] {
        &self.colmap
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn first_target(&self) -> usize {
        self.first_target
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Distinct block ids present in the design, in column order.
    pub fn block_ids(&self) -> Vec<BlockId> {
        let mut ids: Vec<BlockId> = Vec::new();
        for b in self.colmap.iter().filter_map(|c| c.block) {
            if !ids.contains(&b) {
                ids.push(b);
            }
        }
        ids
    }

    pub fn has_block(&self, block: BlockId) -> bool {
        self.colmap.iter().any(|c| c.block == Some(block))
    }

    /// Regressor row for predicting `y[t]` from the raw series.
    pub fn regressor_row(&self, y: &[f64], x: &TimeSeriesPanel, t: usize) -> DVector<f64> {
        DVector::from_iterator(self.colmap.len(), self.colmap.iter().map(|c| c.value(y, x, t)))
    }

    /// Same design layout on a new response series (predictors unchanged).
    pub fn with_response(&self, y: &[f64], x: &TimeSeriesPanel) -> ArxDesign {
        let n = self.nrows();
        let xm = DMatrix::from_fn(n, self.colmap.len(), |i, j| self.colmap[j].value(y, x, self.first_target + i));
        ArxDesign {
            y: DVector::from_iterator(n, (0..n).map(|i| y[self.first_target + i])),
            x: xm,
            p: self.p,
            colmap: self.colmap.clone(),
            first_target: self.first_target,
            centered: false,
        }
    }

    /// Same layout with new data; `x` must have the same shape.
    pub(crate) fn replace_data(&self, y: DVector<f64>, x: DMatrix<f64>) -> ArxDesign {
        debug_assert_eq!(x.shape(), self.x.shape());
        ArxDesign {
            y,
            x,
            p: self.p,
            colmap: self.colmap.clone(),
            first_target: self.first_target,
            centered: false,
        }
    }

    fn select(&self, keep: &[usize]) -> ArxDesign {
        ArxDesign {
            y: self.y.clone(),
            x: self.x.select_columns(keep),
            p: self.p,
            colmap: keep.iter().map(|&j| self.colmap[j]).collect(),
            first_target: self.first_target,
            centered: self.centered,
        }
    }
}

/// Build the design on the full sample (`T - p` rows).
pub fn build_design(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    p: usize,
    blocks: &BlockStructure,
) -> Result<ArxDesign> {
    build_design_from(y, x, p, blocks, p)
}

/// Build the design with the first response at raw time `first_target`
/// (`>= p`). Used to put designs of different lag orders on a common sample.
pub fn build_design_from(
    y: &TimeSeriesPanel,
    x: &TimeSeriesPanel,
    p: usize,
    blocks: &BlockStructure,
    first_target: usize,
) -> Result<ArxDesign> {
    if y.ncols() != 1 {
        return Err(Error::Dimension(format!("response panel has {} columns, expected 1", y.ncols())));
    }
    if p == 0 {
        return Err(Error::Argument("lag order must be at least 1".into()));
    }
    let t = y.nrows();
    if x.nrows() != t {
        return Err(Error::Dimension(format!("response has {t} rows, predictors {}", x.nrows())));
    }
    if t <= p {
        return Err(Error::Dimension(format!("T = {t} must exceed the lag order p = {p}")));
    }
    if first_target < p || first_target >= t {
        return Err(Error::Dimension(format!("first target {first_target} outside {p}..{t}")));
    }
    if blocks.n_columns() != x.ncols() {
        return Err(Error::Structure(format!(
            "block structure covers {} columns, predictor panel has {}",
            blocks.n_columns(),
            x.ncols()
        )));
    }
    let k = x.ncols();
    let mut owner = vec![None; k];
    for id in blocks.ids() {
        for &c in &blocks.block(id)?.columns {
            owner[c] = Some(id);
        }
    }
    let mut colmap = Vec::with_capacity(p * (1 + k));
    for lag in 1..=p {
        colmap.push(ColumnInfo {
            kind: ColumnKind::OwnLag,
            lag,
            source: 0,
            block: None,
        });
    }
    for lag in 1..=p {
        for (c, &block) in owner.iter().enumerate() {
            colmap.push(ColumnInfo {
                kind: ColumnKind::Predictor,
                lag,
                source: c,
                block,
            });
        }
    }
    let yv = y.column(0);
    let n = t - first_target;
    let xm = DMatrix::from_fn(n, colmap.len(), |i, j| colmap[j].value(&yv, x, first_target + i));
    let centered = y.values().column(0).mean().abs() <= 1e-10
        && x.values().column_iter().all(|c| c.mean().abs() <= 1e-10);
    Ok(ArxDesign {
        y: DVector::from_iterator(n, yv[first_target..].iter().copied()),
        x: xm,
        p,
        colmap,
        first_target,
        centered,
    })
}

/// Remove every lag of `block`.
pub fn drop_block(design: &ArxDesign, block: BlockId) -> Result<ArxDesign> {
    if !design.has_block(block) {
        return Err(Error::UnknownBlock(block.to_string()));
    }
    let keep: Vec<usize> = (0..design.ncols()).filter(|&j| design.colmap[j].block != Some(block)).collect();
    Ok(design.select(&keep))
}

/// Keep own lags and the predictor columns of the listed blocks.
pub fn retain_blocks(design: &ArxDesign, blocks: &[BlockId]) -> ArxDesign {
    let keep: Vec<usize> = (0..design.ncols())
        .filter(|&j| match design.colmap[j].block {
            None => design.colmap[j].kind == ColumnKind::OwnLag,
            Some(b) => blocks.contains(&b),
        })
        .collect();
    design.select(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panels(y: &[f64], xs: &[Vec<f64>]) -> (TimeSeriesPanel, TimeSeriesPanel) {
        (
            TimeSeriesPanel::from_series("y", y).unwrap(),
            TimeSeriesPanel::from_columns(xs).unwrap(),
        )
    }

    #[test]
    fn hand_built_lag_matrix() {
        let (y, x) = panels(&[1.0, 2.0, 3.0], &[vec![4.0, 5.0, 6.0]]);
        let blocks = BlockStructure::contiguous(&[1]).unwrap();
        let d = build_design(&y, &x, 1, &blocks).unwrap();
        assert_eq!(d.y().as_slice(), &[2.0, 3.0]);
        assert_eq!(d.x(), &DMatrix::from_row_slice(2, 2, &[1.0, 4.0, 2.0, 5.0]));
    }

    #[test]
    fn boundary_lag_order() {
        let (y, x) = panels(&[1.0, 2.0, 3.0, 4.0], &[vec![0.0, 1.0, 0.0, 1.0]]);
        let blocks = BlockStructure::contiguous(&[1]).unwrap();
        assert_eq!(build_design(&y, &x, 3, &blocks).unwrap().nrows(), 1);
        assert!(matches!(build_design(&y, &x, 4, &blocks), Err(Error::Dimension(_))));
    }

    #[test]
    fn column_order_is_lag_major() {
        let (y, x) = panels(&[1.0, 2.0, 3.0, 4.0, 5.0], &[vec![10.0, 20.0, 30.0, 40.0, 50.0], vec![100.0, 200.0, 300.0, 400.0, 500.0]]);
        let blocks = BlockStructure::contiguous(&[1, 1]).unwrap();
        let d = build_design(&y, &x, 2, &blocks).unwrap();
        assert_eq!(d.ncols(), 6);
        let order: Vec<_> = d.colmap().iter().map(|c| (c.kind, c.lag, c.source)).collect();
        use ColumnKind::*;
        assert_eq!(
            order,
            vec![(OwnLag, 1, 0), (OwnLag, 2, 0), (Predictor, 1, 0), (Predictor, 1, 1), (Predictor, 2, 0), (Predictor, 2, 1)]
        );
        // first row predicts y[2] = 3
        assert_eq!(d.x().row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0, 20.0, 200.0, 10.0, 100.0]);
    }

    #[test]
    fn bad_blocks_rejected() {
        let (y, x) = panels(&[1.0, 2.0, 3.0], &[vec![4.0, 5.0, 6.0]]);
        let blocks = BlockStructure::contiguous(&[2]).unwrap();
        assert!(matches!(build_design(&y, &x, 1, &blocks), Err(Error::Structure(_))));
    }

    #[test]
    fn drop_block_removes_all_lags() {
        let (y, x) = panels(&[1.0, 2.0, 3.0, 4.0, 5.0], &[vec![10.0, 20.0, 30.0, 40.0, 50.0], vec![1.0, 0.0, 1.0, 0.0, 1.0]]);
        let blocks = BlockStructure::contiguous(&[1, 1]).unwrap();
        let d = build_design(&y, &x, 2, &blocks).unwrap();
        let a = BlockId(0);
        let b = BlockId(1);
        let dropped = drop_block(&d, b).unwrap();
        let order: Vec<_> = dropped.colmap().iter().map(|c| (c.kind, c.lag, c.block)).collect();
        use ColumnKind::*;
        assert_eq!(order, vec![(OwnLag, 1, None), (OwnLag, 2, None), (Predictor, 1, Some(a)), (Predictor, 2, Some(a))]);
        assert!(dropped.colmap().iter().all(|c| c.block != Some(b)));
        assert!(matches!(drop_block(&dropped, b), Err(Error::UnknownBlock(_))));

        let ar = drop_block(&dropped, a).unwrap();
        assert_eq!(ar.ncols(), 2);
        assert!(ar.colmap().iter().all(|c| c.kind == OwnLag));
    }

    #[test]
    fn pure_autoregression_without_predictors() {
        let y = TimeSeriesPanel::from_series("y", &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let x = TimeSeriesPanel::empty(4);
        let blocks = BlockStructure::new(vec![], 0).unwrap();
        let d = build_design(&y, &x, 2, &blocks).unwrap();
        assert_eq!(d.ncols(), 2);
        assert_eq!(d.x(), &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 3.0, 2.0]));
    }

    #[test]
    fn common_sample_start() {
        let (y, x) = panels(&[1.0, 2.0, 3.0, 4.0, 5.0], &[vec![0.0; 5]]);
        let blocks = BlockStructure::contiguous(&[1]).unwrap();
        let d = build_design_from(&y, &x, 1, &blocks, 3).unwrap();
        assert_eq!(d.y().as_slice(), &[4.0, 5.0]);
        assert_eq!(d.x().column(0).as_slice(), &[3.0, 4.0]);
    }
}
