//! Monte Carlo study of the block tests.
//!
//! Data come from an ARX(1) response driven by a stationary VAR(1) predictor
//! panel:
//!
//! ```text
//! y_t = 0.5 y_{t-1} + a1 x_{t-1} + e_t,   e_t ~ N(0, 0.1)
//! x_t = 0.5 x_{t-1} + u_t,                u_t ~ N_k(0, 0.1 I)
//! ```
//!
//! Both noise parameters are variances.
//!
//! The first block always enters the response; the second only under the
//! alternative. Tests are always run on the second block.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{forecast_grid, Estimator, ForecastReport, ForecastSettings, Selection};
use crate::inference::{granger_lasso_test, wald_tests, TestSettings};
use crate::panel::{BlockId, BlockStructure, TimeSeriesPanel};
use crate::seed::{self, tags};

/// Discarded initial steps of every simulated path.
pub const BURN_IN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    Null,
    Alternative,
}

impl Hypothesis {
    fn tag(self) -> u64 {
        match self {
            Hypothesis::Null => tags::HYPOTHESIS_NULL,
            Hypothesis::Alternative => tags::HYPOTHESIS_ALT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub name: String,
    pub t: usize,
    pub k: usize,
    pub a1_null: Vec<f64>,
    pub a1_alt: Vec<f64>,
    pub block_sizes: Vec<usize>,
    pub own_coef: f64,
    /// Variance of the response innovation `e_t`.
    pub noise_var: f64,
    /// Variance of each predictor innovation `u_t`.
    pub predictor_noise_var: f64,
    /// Diagonal of the predictor VAR(1) matrix.
    pub predictor_coef: f64,
}

impl SimulationDesign {
    /// First block active under both hypotheses, second block only under the
    /// alternative.
    fn two_active_blocks(t: usize, block_sizes: Vec<usize>, coef: f64) -> Self {
        let k: usize = block_sizes.iter().sum();
        let (b1, b2) = (block_sizes[0], block_sizes[1]);
        let mut a1_null = vec![0.0; k];
        a1_null[..b1].fill(coef);
        let mut a1_alt = a1_null.clone();
        a1_alt[b1..b1 + b2].fill(coef);
        Self {
            name: format!("T={t} k={k}"),
            t,
            k,
            a1_null,
            a1_alt,
            block_sizes,
            own_coef: 0.5,
            noise_var: 0.1,
            predictor_noise_var: 0.1,
            predictor_coef: 0.5,
        }
    }

    pub fn a1(&self, h: Hypothesis) -> &[f64] {
        match h {
            Hypothesis::Null => &self.a1_null,
            Hypothesis::Alternative => &self.a1_alt,
        }
    }

    pub fn blocks(&self) -> BlockStructure {
        BlockStructure::contiguous(&self.block_sizes).expect("builtin block sizes are valid")
    }

    /// The block under test.
    pub fn tested_block(&self) -> BlockId {
        BlockId(1)
    }
}

/// The four designs: `(T, k)` = (100, 25), (100, 50), (100, 75) with blocks
/// `(5, 5, 5, k - 15)` and coefficients 0.2, and (40, 150) with ten blocks of
/// nine followed by ten blocks of six and coefficients 0.4.
pub fn builtin_designs() -> Vec<SimulationDesign> {
    let mut designs: Vec<SimulationDesign> = [25, 50, 75]
        .iter()
        .map(|&k| SimulationDesign::two_active_blocks(100, vec![5, 5, 5, k - 15], 0.2))
        .collect();
    let mut sizes = vec![9; 10];
    sizes.extend(std::iter::repeat_n(6, 10));
    designs.push(SimulationDesign::two_active_blocks(40, sizes, 0.4));
    designs
}

/// Builtin design by 1-based number.
pub fn builtin_design(number: usize) -> Result<SimulationDesign> {
    builtin_designs()
        .into_iter()
        .nth(number.wrapping_sub(1))
        .ok_or_else(|| Error::Argument(format!("no builtin design {number}; expected 1..=4")))
}

/// Simulate `(y, x)` panels of `T` rows after a burn-in from the zero state.
pub fn simulate(design: &SimulationDesign, h: Hypothesis, seed: u64) -> (TimeSeriesPanel, TimeSeriesPanel) {
    let mut rng = seed::rng(seed);
    let e_dist = Normal::new(0.0, design.noise_var.sqrt()).expect("finite standard deviation");
    let u_dist = Normal::new(0.0, design.predictor_noise_var.sqrt()).expect("finite standard deviation");
    let a1 = design.a1(h);
    let k = design.k;
    let total = design.t + BURN_IN;
    let mut x_prev = vec![0.0; k];
    let mut y_prev = 0.0;
    let mut ys = Vec::with_capacity(design.t);
    let mut xs = vec![Vec::with_capacity(design.t); k];
    for step in 0..total {
        let y_t = design.own_coef * y_prev + a1.iter().zip(&x_prev).map(|(a, x)| a * x).sum::<f64>() + e_dist.sample(&mut rng);
        let x_t: Vec<f64> = x_prev.iter().map(|x| design.predictor_coef * x + u_dist.sample(&mut rng)).collect();
        if step >= BURN_IN {
            ys.push(y_t);
            for (col, &v) in xs.iter_mut().zip(&x_t) {
                col.push(v);
            }
        }
        y_prev = y_t;
        x_prev = x_t;
    }
    (
        TimeSeriesPanel::from_series("y", &ys).expect("finite simulated series"),
        TimeSeriesPanel::from_columns(&xs).expect("finite simulated series"),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Wald,
    GrangerLasso,
}

impl TestKind {
    pub fn label(self) -> &'static str {
        match self {
            TestKind::Wald => "wald",
            TestKind::GrangerLasso => "granger_lasso",
        }
    }
}

/// p-value of `test` on the design's tested block for one simulated panel.
pub fn run_test(
    design: &SimulationDesign,
    h: Hypothesis,
    test: TestKind,
    settings: &TestSettings,
    run_seed: u64,
) -> Result<f64> {
    let (y, x) = simulate(design, h, seed::derive(run_seed, &[tags::PANEL]));
    let blocks = design.blocks();
    let block = design.tested_block();
    match test {
        TestKind::Wald => Ok(wald_tests(&y, &x, &blocks, &[block], settings.p_max)?[0].p_value),
        TestKind::GrangerLasso => {
            Ok(granger_lasso_test(&y, &x, &blocks, block, settings, seed::derive(run_seed, &[tags::TEST]))?.mid_p)
        }
    }
}

/// p-values of `n` independent runs. Run `j` uses a seed derived from
/// `(seed, hypothesis, j)` only, so any prefix of the stream is reproducible.
pub fn simulated_pvalues(
    design: &SimulationDesign,
    h: Hypothesis,
    test: TestKind,
    n: usize,
    settings: &TestSettings,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Argument("number of simulation runs must be at least 1".into()));
    }
    (0..n)
        .into_par_iter()
        .map(|j| run_test(design, h, test, settings, seed::derive(seed, &[h.tag(), j as u64])))
        .collect()
}

/// `(1/N) sum I(p_j < alpha)`.
pub fn rejection_rate(pvalues: &[f64], alpha: f64) -> f64 {
    pvalues.iter().filter(|&&p| p < alpha).count() as f64 / pvalues.len() as f64
}

pub fn simulated_size(
    design: &SimulationDesign,
    test: TestKind,
    alpha: f64,
    n: usize,
    settings: &TestSettings,
    seed: u64,
) -> Result<f64> {
    let p = simulated_pvalues(design, Hypothesis::Null, test, n, settings, seed)?;
    Ok(rejection_rate(&p, alpha))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub f_null: f64,
    pub f_alt: f64,
}

/// Empirical CDFs of null and alternative p-values on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizePowerCurve {
    pub points: Vec<CurvePoint>,
}

fn ecdf(sorted: &[f64], x: f64) -> f64 {
    sorted.partition_point(|&p| p <= x) as f64 / sorted.len() as f64
}

impl SizePowerCurve {
    /// `m >= 2` grid points `x_i = i / (m - 1)`.
    pub fn from_pvalues(p_null: &[f64], p_alt: &[f64], m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Argument("curve grid needs at least 2 points".into()));
        }
        if p_null.is_empty() || p_alt.is_empty() {
            return Err(Error::Argument("empty p-value sample".into()));
        }
        let sort = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s
        };
        let (sn, sa) = (sort(p_null), sort(p_alt));
        let points = (0..m)
            .map(|i| {
                let x = if i == m - 1 { 1.0 } else { i as f64 / (m - 1) as f64 };
                CurvePoint {
                    x,
                    f_null: ecdf(&sn, x),
                    f_alt: ecdf(&sa, x),
                }
            })
            .collect();
        Ok(Self { points })
    }

    /// Power at a given size, by linear interpolation along the curve
    /// `(F_null, F_alt)` with `(0, 0)` prepended. At a vertical step the
    /// largest power reached at that size is returned.
    pub fn power_at(&self, size: f64) -> f64 {
        let mut pts: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        pts.extend(self.points.iter().map(|p| (p.f_null, p.f_alt)));
        let mut best: f64 = 0.0;
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x0 <= size && size <= x1 {
                let v = if x1 > x0 { y0 + (y1 - y0) * (size - x0) / (x1 - x0) } else { y0.max(y1) };
                best = best.max(v);
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Numeric(e.to_string());
        wtr.write_record(["x", "F_H0", "F_HA"]).map_err(err)?;
        for p in &self.points {
            wtr.write_record([p.x.to_string(), p.f_null.to_string(), p.f_alt.to_string()])
                .map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::Numeric(e.to_string()))
    }
}

pub fn size_power_curve(
    design: &SimulationDesign,
    test: TestKind,
    n: usize,
    settings: &TestSettings,
    m: usize,
    seed: u64,
) -> Result<SizePowerCurve> {
    let p0 = simulated_pvalues(design, Hypothesis::Null, test, n, settings, seed)?;
    let p1 = simulated_pvalues(design, Hypothesis::Alternative, test, n, settings, seed)?;
    SizePowerCurve::from_pvalues(&p0, &p1, m)
}

/// Forecast grids on `n` panels simulated under the alternative. Panel `j`
/// and its forecasts use seeds derived from `(seed, j)` only.
pub fn simulated_forecasts(
    design: &SimulationDesign,
    selections: &[Selection],
    estimators: &[Estimator],
    n: usize,
    settings: &ForecastSettings,
    seed: u64,
) -> Result<Vec<ForecastReport>> {
    if n == 0 {
        return Err(Error::Argument("number of simulation runs must be at least 1".into()));
    }
    let blocks = design.blocks();
    (0..n)
        .into_par_iter()
        .map(|j| {
            let run = seed::derive(seed, &[tags::FORECAST, j as u64]);
            let (y, x) = simulate(design, Hypothesis::Alternative, seed::derive(run, &[tags::PANEL]));
            forecast_grid(&y, &x, &blocks, selections, estimators, settings, run)
        })
        .collect()
}

/// Average MAFE of one cell over reports; `None` if the cell is `NA` in any.
pub fn average_mafe(reports: &[ForecastReport], selection: Selection, estimator: Estimator) -> Option<f64> {
    let mut sum = 0.0;
    for r in reports {
        sum += r.mafe(selection, estimator)?;
    }
    Some(sum / reports.len() as f64)
}
