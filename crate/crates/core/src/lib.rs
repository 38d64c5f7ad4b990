//! Block Granger causality for high-dimensional ARX models.
//!
//! The response `y_t` is regressed on its own lags and on lags of `k`
//! predictor series partitioned into blocks. Coefficients are estimated with
//! the adaptive lasso; whether a block Granger-causes the response is tested
//! with a Wald statistic calibrated by a residual bootstrap under the null.
//!
//! Besides the test itself the crate carries the machinery to study it: a
//! Monte Carlo harness for size and size-power curves, and a rolling-window
//! forecast engine comparing block-selection techniques across estimators.

pub mod design;
pub mod error;
pub mod estimators;
pub mod forecast;
pub mod inference;
pub mod panel;
pub mod seed;
pub mod simulation;

pub use design::{build_design, drop_block, ArxDesign, ColumnInfo, ColumnKind};
pub use error::{Error, Result};
pub use panel::{center, difference, Block, BlockId, BlockStructure, TimeSeriesPanel};
