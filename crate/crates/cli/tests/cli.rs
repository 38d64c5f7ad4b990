use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_granger-lasso")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn err(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn panel_args<'a>(cmd: &'a str, out: &'a str, panel: &'a str, blocks: &'a str) -> Vec<&'a str> {
    vec![cmd, "--input", panel, "--target", "y", "--blocks", blocks, "--out", out]
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn test_writes_one_row_per_block() {
    let dir = tempfile::tempdir().unwrap();
    let (panel, blocks) = (fixture("panel.csv"), fixture("blocks.txt"));
    let out = dir.path().to_str().unwrap();
    let mut args = panel_args("test", out, panel.to_str().unwrap(), blocks.to_str().unwrap());
    args.extend(["--b", "40", "--b-cov", "50"]);
    ok(&args);
    let csv = read(dir.path(), "tests.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "block,Q,mid_p,B,p,lambda");
    assert_eq!(lines.len(), 4);
    let lead: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(lead[0], "lead");
    assert!(lead[2].parse::<f64>().unwrap() < 0.05);

    let json: serde_json::Value = serde_json::from_str(&read(dir.path(), "tests.json")).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 3);
    assert_eq!(json[0]["B"], 40);

    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["command"], "test");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["b"], 40);
    assert_eq!(manifest["config"]["panel"]["target"], "y");
    assert_eq!(manifest["outputs"], serde_json::json!(["tests.csv", "tests.json"]));
}

#[test]
fn reruns_are_byte_identical_for_any_worker_count() {
    let (panel, blocks) = (fixture("panel.csv"), fixture("blocks.txt"));
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, jobs) in dirs.iter().zip(["1", "1", "3"]) {
        let mut args = panel_args("test", dir.path().to_str().unwrap(), panel.to_str().unwrap(), blocks.to_str().unwrap());
        args.extend(["--b", "30", "--b-cov", "50", "--seed", "9", "--jobs", jobs]);
        ok(&args);
    }
    for name in ["tests.csv", "tests.json", "manifest.json"] {
        let first = fs::read(dirs[0].path().join(name)).unwrap();
        for d in &dirs[1..] {
            assert_eq!(first, fs::read(d.path().join(name)).unwrap(), "{name} differs");
        }
    }
}

#[test]
fn wald_and_fit_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let panel = fixture("panel.csv");
    let out = dir.path().to_str().unwrap();
    ok(&["test", "--input", panel.to_str().unwrap(), "--target", "y", "--test", "wald", "--out", out]);
    let csv = read(dir.path(), "tests.csv");
    assert!(csv.starts_with("block,Q,df,p_value,p\n"));
    // without a block map every predictor is its own block
    assert_eq!(csv.lines().count(), 7);

    let blocks = fixture("blocks.txt");
    ok(&panel_args("fit", out, panel.to_str().unwrap(), blocks.to_str().unwrap()));
    let fit: serde_json::Value = serde_json::from_str(&read(dir.path(), "fit.json")).unwrap();
    assert!(fit["selected_blocks"].as_array().unwrap().contains(&serde_json::json!("lead")));
    let p = fit["p"].as_u64().unwrap() as usize;
    assert_eq!(read(dir.path(), "fit.csv").lines().count(), 1 + p * 7);
}

#[test]
fn input_errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let panel = fixture("panel.csv");
    let panel = panel.to_str().unwrap();

    let missing = dir.path().join("missing.csv");
    let msg = err(&["fit", "--input", missing.to_str().unwrap(), "--target", "y", "--out", out]);
    assert!(msg.contains("missing.csv"), "{msg}");

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,x1\n1.0,2.0\n3.0,oops\n4.0,5.0\n").unwrap();
    let msg = err(&["fit", "--input", bad.to_str().unwrap(), "--target", "y", "--out", out]);
    assert!(msg.contains("bad.csv:3:"), "{msg}");

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "y,x1\n1.0,2.0\n3.0\n").unwrap();
    let msg = err(&["fit", "--input", ragged.to_str().unwrap(), "--target", "y", "--out", out]);
    assert!(msg.contains("ragged.csv:3:"), "{msg}");

    let map = dir.path().join("map.txt");
    fs::write(&map, "a: x1,x2\n\nb: x3,x9\n").unwrap();
    let msg = err(&["fit", "--input", panel, "--target", "y", "--blocks", map.to_str().unwrap(), "--out", out]);
    assert!(msg.contains("map.txt:3:") && msg.contains("x9"), "{msg}");

    fs::write(&map, "a: x1,x2\nb x3\n").unwrap();
    let msg = err(&["fit", "--input", panel, "--target", "y", "--blocks", map.to_str().unwrap(), "--out", out]);
    assert!(msg.contains("map.txt:2:"), "{msg}");

    let msg = err(&["fit", "--input", panel, "--target", "nope", "--out", out]);
    assert!(msg.contains("panel.csv:1:") && msg.contains("nope"), "{msg}");
    assert!(!Path::new(out).join("manifest.json").exists());
}

#[test]
fn simulate_writes_size_table_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "simulate", "--design", "1,4", "--test", "wald", "--alpha", "0.05,0.01", "--n", "20", "--curves", "--m", "11",
        "--out", out,
    ]);
    let table = read(dir.path(), "size_table.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "design,T,k,wald_0.05,wald_0.01");
    assert!(lines[1].starts_with("1,100,25,"));
    assert_eq!(lines[2], "4,40,150,NA,NA");
    let curve = read(dir.path(), "curve_design1_wald.csv");
    assert!(curve.starts_with("x,F_H0,F_HA\n"));
    assert_eq!(curve.lines().count(), 12);
    assert!(curve.lines().last().unwrap().starts_with("1,1,1"));
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["config"]["runs"], 20);
    assert_eq!(manifest["outputs"][1], "curve_design1_wald.csv");
}

#[test]
fn forecast_writes_grid_paths_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let (panel, blocks) = (fixture("panel.csv"), fixture("blocks.txt"));
    let out = dir.path().to_str().unwrap();
    let mut args = panel_args("forecast", out, panel.to_str().unwrap(), blocks.to_str().unwrap());
    args.extend(["--s", "77", "--b", "20", "--b-cov", "50", "--selection", "all,glasso_test", "--estimator", "ols,factor"]);
    ok(&args);
    let grid = read(dir.path(), "forecast_grid.csv");
    assert_eq!(grid.lines().next().unwrap(), "selection,ols,factor");
    assert_eq!(grid.lines().count(), 3);
    // three windows, four cells
    assert_eq!(read(dir.path(), "forecast_paths.csv").lines().count(), 1 + 3 * 4);
    assert_eq!(read(dir.path(), "selections.jsonl").lines().count(), 3 * 2);
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["config"]["window"], 77);

    let msg = err(&["forecast", "--out", out]);
    assert!(msg.contains("--input") || msg.contains("--design"), "{msg}");
}

#[test]
fn full_flag_raises_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&["simulate", "--design", "4", "--test", "wald", "--full", "--out", out]);
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["config"]["runs"], 1000);
    assert_eq!(manifest["config"]["replicates"], 500);
    assert_eq!(manifest["full"], true);
}
