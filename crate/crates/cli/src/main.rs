use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use granger_lasso::estimators::{select_arx, PipelineSettings};
use granger_lasso::forecast::{forecast_grid, Estimator, ForecastSettings, Selection};
use granger_lasso::inference::{granger_lasso_tests, wald_tests, TestSettings};
use granger_lasso::simulation::{
    builtin_design, rejection_rate, simulate, simulated_pvalues, Hypothesis, SizePowerCurve, TestKind,
};
use granger_lasso::{center, difference, seed, BlockId, BlockStructure, ColumnKind, TimeSeriesPanel};
use serde::Serialize;

// top-level seed tags, one per command
const TEST: u64 = 1;
const SIMULATE: u64 = 2;
const FORECAST: u64 = 3;

#[derive(Parser, Debug)]
#[command(name = "granger-lasso", version, about = "Block Granger causality in high-dimensional ARX models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: all cores). Does not change any output.
    #[arg(long, global = true)]
    #[serde(skip)]
    jobs: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Full-scale defaults: N=1000 runs and B=500 replicates.
    #[arg(long, global = true)]
    full: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// BIC-selected adaptive lasso fit of the target on all blocks.
    Fit(FitArgs),
    /// Granger lasso (or classical Wald) test of every block.
    Test(TestArgs),
    /// Monte Carlo size tables and size-power curves on the built-in designs.
    Simulate(SimulateArgs),
    /// Rolling-window forecast grid, selection technique by estimator.
    Forecast(ForecastArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct PanelArgs {
    /// Panel CSV: header of labels, one row per time point, oldest first.
    #[arg(long)]
    input: PathBuf,
    /// Label of the response series.
    #[arg(long)]
    target: String,
    /// Block map, one `name: label1,label2,...` line per block. Without it
    /// every predictor is its own block.
    #[arg(long)]
    blocks: Option<PathBuf>,
    /// Difference every series this many times before fitting.
    #[arg(long, default_value_t = 0)]
    difference: usize,
    #[arg(long = "p-max", default_value_t = 3)]
    p_max: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
struct FitArgs {
    #[command(flatten)]
    panel: PanelArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TestChoice {
    GrangerLasso,
    Wald,
}

impl From<TestChoice> for TestKind {
    fn from(t: TestChoice) -> Self {
        match t {
            TestChoice::GrangerLasso => TestKind::GrangerLasso,
            TestChoice::Wald => TestKind::Wald,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct TestArgs {
    #[command(flatten)]
    panel: PanelArgs,
    #[arg(long, value_enum, default_value_t = TestChoice::GrangerLasso)]
    test: TestChoice,
    /// Null bootstrap replicates (default 200, or 500 with --full).
    #[arg(long)]
    b: Option<usize>,
    /// Bootstrap replicates for the coefficient covariance.
    #[arg(long = "b-cov", default_value_t = 200)]
    b_cov: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SimulateArgs {
    /// Built-in designs 1..=4 (repeatable; default all).
    #[arg(long, value_delimiter = ',')]
    design: Vec<usize>,
    /// Nominal levels (repeatable).
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    alpha: Vec<f64>,
    /// Tests to run (repeatable).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "granger-lasso")]
    test: Vec<TestChoice>,
    /// Monte Carlo runs (default 500, or 1000 with --full).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long = "b-cov", default_value_t = 200)]
    b_cov: usize,
    #[arg(long = "p-max", default_value_t = 3)]
    p_max: usize,
    /// Also simulate the alternative and write size-power curves.
    #[arg(long)]
    curves: bool,
    /// Grid points of the curves.
    #[arg(long, default_value_t = 101)]
    m: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ForecastArgs {
    /// Panel CSV; omit to forecast a panel simulated from --design.
    #[arg(long, requires = "target")]
    input: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    blocks: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    difference: usize,
    /// Built-in design to simulate under the alternative when no input is given.
    #[arg(long, conflicts_with = "input")]
    design: Option<usize>,
    #[arg(long = "p-max", default_value_t = 3)]
    p_max: usize,
    /// Window length (default floor(0.9 T)).
    #[arg(long)]
    s: Option<usize>,
    /// Level of the test-based selections.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    /// Bootstrap replicates per window test (default 200, or 500 with --full).
    #[arg(long)]
    b: Option<usize>,
    #[arg(long = "b-cov", default_value_t = 200)]
    b_cov: usize,
    /// Run the selection on the first window only.
    #[arg(long = "select-once")]
    select_once: bool,
    #[arg(long, value_delimiter = ',')]
    selection: Vec<Selection>,
    #[arg(long, value_delimiter = ',')]
    estimator: Vec<Estimator>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    full: bool,
    config: &'a C,
    outputs: Vec<String>,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("{}: cannot create output directory", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("{}: cannot create file", path.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().with_context(|| format!("{}: write failed", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn finish<C: Serialize>(mut self, common: &Common, command: &'static str, config: &C) -> Result<()> {
        let outputs = std::mem::take(&mut self.written);
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: common.seed,
            full: common.full,
            config,
            outputs,
        };
        self.write("manifest.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

struct LoadedPanel {
    y: TimeSeriesPanel,
    x: TimeSeriesPanel,
    blocks: BlockStructure,
}

fn load_panel(input: &Path, target: &str, blocks: Option<&Path>, diff: usize) -> Result<LoadedPanel> {
    let mut panel = TimeSeriesPanel::read_csv_path(input)?;
    if diff > 0 {
        panel = difference(&panel, diff)?;
    }
    let Some(col) = panel.column_index(target) else {
        bail!("{}:1: no column labelled {target:?}", input.display());
    };
    let others: Vec<usize> = (0..panel.ncols()).filter(|&c| c != col).collect();
    let y = panel.select_columns(&[col]);
    let x = panel.select_columns(&others);
    let blocks = match blocks {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("{}: cannot read block map", path.display()))?;
            BlockStructure::parse_block_map(&text, x.labels(), path)?
        }
        None => BlockStructure::singletons(x.labels())?,
    };
    Ok(LoadedPanel { y, x, blocks })
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

#[derive(Serialize)]
struct FitRecord {
    target: String,
    p: usize,
    lambda: f64,
    df: usize,
    bic: f64,
    sigma2: f64,
    selected_blocks: Vec<String>,
    coefficients: Vec<CoefRecord>,
}

#[derive(Serialize)]
struct CoefRecord {
    series: String,
    lag: usize,
    block: Option<String>,
    coefficient: f64,
}

fn run_fit(common: &Common, args: &FitArgs) -> Result<()> {
    let a = &args.panel;
    let data = load_panel(&a.input, &a.target, a.blocks.as_deref(), a.difference)?;
    let (yc, _) = center(&data.y);
    let (xc, _) = center(&data.x);
    let sel = select_arx(&yc, &xc, &data.blocks, a.p_max, &PipelineSettings::default())?;
    let coefficients: Vec<CoefRecord> = sel
        .design
        .colmap()
        .iter()
        .zip(&sel.fit.beta)
        .map(|(c, &b)| CoefRecord {
            series: match c.kind {
                ColumnKind::OwnLag => a.target.clone(),
                ColumnKind::Predictor => data.x.labels()[c.source].clone(),
            },
            lag: c.lag,
            block: c.block.map(|id| data.blocks.name(id).to_string()),
            coefficient: b,
        })
        .collect();
    let selected = granger_lasso::inference::blocks_with_nonzero(&sel.design, &sel.fit.beta);
    let record = FitRecord {
        target: a.target.clone(),
        p: sel.p,
        lambda: sel.fit.lambda,
        df: sel.fit.df,
        bic: sel.fit.bic,
        sigma2: sel.fit.sigma2,
        selected_blocks: selected.iter().map(|&id| data.blocks.name(id).to_string()).collect(),
        coefficients,
    };
    let mut out = Outputs::new(&common.out)?;
    out.write("fit.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["series", "lag", "block", "coefficient"])?;
        for c in &record.coefficients {
            wtr.write_record([c.series.clone(), c.lag.to_string(), c.block.clone().unwrap_or_default(), fmt_f(c.coefficient)])?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    out.write("fit.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &record)?;
        writeln!(w)?;
        Ok(())
    })?;
    out.finish(common, "fit", args)
}

#[derive(Serialize)]
struct TestRecord {
    block: String,
    #[serde(rename = "Q")]
    q: f64,
    mid_p: f64,
    #[serde(rename = "B")]
    b: usize,
    p: usize,
    lambda: f64,
}

#[derive(Serialize)]
struct WaldRecord {
    block: String,
    #[serde(rename = "Q")]
    q: f64,
    df: usize,
    p_value: f64,
    p: usize,
}

fn write_records<T: Serialize>(out: &mut Outputs, stem: &str, records: &[T]) -> Result<()> {
    out.write(&format!("{stem}.csv"), |w| {
        let mut wtr = csv::Writer::from_writer(w);
        for r in records {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    out.write(&format!("{stem}.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, records)?;
        writeln!(w)?;
        Ok(())
    })
}

fn run_test(common: &Common, args: &TestArgs) -> Result<()> {
    let a = &args.panel;
    let data = load_panel(&a.input, &a.target, a.blocks.as_deref(), a.difference)?;
    let ids: Vec<BlockId> = data.blocks.ids().collect();
    let mut out = Outputs::new(&common.out)?;
    match args.test {
        TestChoice::GrangerLasso => {
            let settings = TestSettings {
                p_max: a.p_max,
                b: args.b.unwrap_or(if common.full { 500 } else { 200 }),
                b_cov: args.b_cov,
                pipeline: PipelineSettings::default(),
            };
            let results =
                granger_lasso_tests(&data.y, &data.x, &data.blocks, &ids, &settings, seed::derive(common.seed, &[TEST]))?;
            let records: Vec<TestRecord> = results
                .into_iter()
                .map(|r| TestRecord {
                    block: r.block,
                    q: r.q,
                    mid_p: r.mid_p,
                    b: r.b,
                    p: r.p_used,
                    lambda: r.lambda_used,
                })
                .collect();
            write_records(&mut out, "tests", &records)?;
        }
        TestChoice::Wald => {
            let results = wald_tests(&data.y, &data.x, &data.blocks, &ids, a.p_max)?;
            let records: Vec<WaldRecord> = results
                .into_iter()
                .map(|r| WaldRecord {
                    block: r.block,
                    q: r.q,
                    df: r.df,
                    p_value: r.p_value,
                    p: r.p_used,
                })
                .collect();
            write_records(&mut out, "tests", &records)?;
        }
    }
    out.finish(common, "test", args)
}

fn run_simulate(common: &Common, args: &SimulateArgs) -> Result<()> {
    let designs = if args.design.is_empty() { vec![1, 2, 3, 4] } else { args.design.clone() };
    let n = args.n.unwrap_or(if common.full { 1000 } else { 500 });
    let settings = TestSettings {
        p_max: args.p_max,
        b: args.b.unwrap_or(if common.full { 500 } else { 200 }),
        b_cov: args.b_cov,
        pipeline: PipelineSettings::default(),
    };
    settings.validate()?;
    for &a in &args.alpha {
        if !(0.0..=1.0).contains(&a) {
            bail!("--alpha {a} is outside [0, 1]");
        }
    }
    let mut header = vec!["design".to_string(), "T".into(), "k".into()];
    for t in &args.test {
        for a in &args.alpha {
            header.push(format!("{}_{}", TestKind::from(*t).label(), a));
        }
    }
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &d in &designs {
        let design = builtin_design(d)?;
        let mut row = vec![d.to_string(), design.t.to_string(), design.k.to_string()];
        for &t in &args.test {
            let kind = TestKind::from(t);
            let s = seed::derive(common.seed, &[SIMULATE, d as u64]);
            match simulated_pvalues(&design, Hypothesis::Null, kind, n, &settings, s) {
                Ok(p0) => {
                    row.extend(args.alpha.iter().map(|&a| fmt_f(rejection_rate(&p0, a))));
                    if args.curves {
                        let p1 = simulated_pvalues(&design, Hypothesis::Alternative, kind, n, &settings, s)?;
                        curves.push((format!("curve_design{d}_{}.csv", kind.label()), SizePowerCurve::from_pvalues(&p0, &p1, args.m)?));
                    }
                }
                Err(e) if e.is_not_computable() => row.extend(args.alpha.iter().map(|_| "NA".to_string())),
                Err(e) => return Err(e.into()),
            }
        }
        rows.push(row);
    }
    let mut out = Outputs::new(&common.out)?;
    out.write("size_table.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&header)?;
        for r in &rows {
            wtr.write_record(r)?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    for (name, curve) in &curves {
        out.write(name, |w| Ok(curve.write_csv(w)?))?;
    }
    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        args: &'a SimulateArgs,
        designs: &'a [usize],
        runs: usize,
        replicates: usize,
    }
    let resolved = Resolved {
        args,
        designs: &designs,
        runs: n,
        replicates: settings.b,
    };
    out.finish(common, "simulate", &resolved)
}

fn run_forecast(common: &Common, args: &ForecastArgs) -> Result<()> {
    let data = match (&args.input, args.design) {
        (Some(input), _) => {
            let target = args.target.as_deref().expect("clap enforces --target with --input");
            load_panel(input, target, args.blocks.as_deref(), args.difference)?
        }
        (None, Some(d)) => {
            let design = builtin_design(d)?;
            let (y, x) = simulate(&design, Hypothesis::Alternative, seed::derive(common.seed, &[FORECAST, 0]));
            LoadedPanel {
                y,
                x,
                blocks: design.blocks(),
            }
        }
        (None, None) => bail!("forecast needs --input with --target, or --design"),
    };
    let defaults = ForecastSettings::for_length(data.y.nrows());
    let settings = ForecastSettings {
        window: args.s.unwrap_or(defaults.window),
        alpha: args.alpha,
        test: TestSettings {
            p_max: args.p_max,
            b: args.b.unwrap_or(if common.full { 500 } else { 200 }),
            b_cov: args.b_cov,
            pipeline: PipelineSettings::default(),
        },
        select_once: args.select_once,
        ..defaults
    };
    let selections = if args.selection.is_empty() { Selection::ALL.to_vec() } else { args.selection.clone() };
    let estimators = if args.estimator.is_empty() { Estimator::ALL.to_vec() } else { args.estimator.clone() };
    let report = forecast_grid(
        &data.y,
        &data.x,
        &data.blocks,
        &selections,
        &estimators,
        &settings,
        seed::derive(common.seed, &[FORECAST, 1]),
    )?;
    let mut out = Outputs::new(&common.out)?;
    out.write("forecast_grid.csv", |w| Ok(report.write_grid_csv(w)?))?;
    out.write("forecast_paths.csv", |w| Ok(report.write_paths_csv(w)?))?;
    out.write("selections.jsonl", |w| Ok(report.write_selection_log(w)?))?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        #[serde(flatten)]
        args: &'a ForecastArgs,
        window: usize,
        replicates: usize,
    }
    let resolved = Resolved {
        args,
        window: settings.window,
        replicates: settings.test.b,
    };
    out.finish(common, "forecast", &resolved)
}

fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().context("cannot start worker pool")?;
    let common = cli.common;
    pool.install(|| match &cli.command {
        Command::Fit(a) => run_fit(&common, a),
        Command::Test(a) => run_test(&common, a),
        Command::Simulate(a) => run_simulate(&common, a),
        Command::Forecast(a) => run_forecast(&common, a),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already embed their cause
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
