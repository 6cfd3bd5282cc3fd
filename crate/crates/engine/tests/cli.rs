use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use odm_engine::evaluate::{find_stream, load_samples};
use odm_engine::io::{read_stream, read_table};

fn odm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odm")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_run_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = odm(&[
        "generate", "--rows", "6", "--cols", "5", "--total", "800", "--alpha", "0.5", "--beta", "2", "--seed", "3",
        "--out", s(&data),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["cost.csv", "log_attraction.csv", "table.csv", "constraints.toml", "config.toml"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let run_dir = dir.path().join("run");
    let out = odm(&[
        "run", "--config", s(&data.join("config.toml")), "--burnin", "20", "--thin", "5", "--format", "csv",
        "--out", s(&run_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("srmse"), "{stdout}");
    for f in ["config.resolved", "timings.csv", "metrics.csv", "checkpoints/member-0.bin", "samples/theta.csv"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }

    let truth = read_table(&data.join("table.csv")).unwrap();
    let tables = load_samples(&find_stream(&run_dir, "table").unwrap(), 30, 0, 1).unwrap();
    assert_eq!(tables.len(), (1000 - 20) / 5);
    for t in &tables {
        let cells: Vec<u64> = t.iter().map(|&v| v as u64).collect();
        let rows: Vec<u64> = cells.chunks(5).map(|r| r.iter().sum()).collect();
        let cols: Vec<u64> = (0..5).map(|j| cells.iter().skip(j).step_by(5).sum()).collect();
        assert_eq!(rows, truth.row_sums());
        assert_eq!(cols, truth.col_sums());
    }
    let theta = read_stream(&run_dir.join("samples/theta.csv")).unwrap();
    assert_eq!(theta.len(), 1000);

    let out = odm(&["evaluate", "--run", s(&run_dir), "--truth", s(&data.join("table.csv")), "--q", "90"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("run,constraints,space,metric,value"));
}

#[test]
fn enumerate_lists_the_fiber() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c.toml");
    fs::write(&c, "row_sums = [1, 1]\ncol_sums = [1, 1]\n").unwrap();
    let out_path = dir.path().join("fiber.csv");
    let out = odm(&["enumerate", "--constraints", s(&c), "--rows", "2", "--cols", "2", "--out", s(&out_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = read_stream(&out_path).unwrap();
    assert_eq!(records.len(), 2);
    for r in records {
        assert!((r.values[4] - 0.5).abs() < 1e-12);
    }
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    assert_eq!(odm(&["run"]).status.code(), Some(1));
    assert_eq!(odm(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "iterations = \"many\"\n").unwrap();
    assert_eq!(odm(&["run", "--config", s(&bad)]).status.code(), Some(1));
    let missing = dir.path().join("missing.toml");
    assert_eq!(odm(&["run", "--config", s(&missing)]).status.code(), Some(2));
}

#[test]
fn benchmark_prints_a_timing_table() {
    let out = odm(&["benchmark", "--sizes", "6x6,8x8", "--iterations", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8_lossy(&out.stdout);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("rows,cols,cells,intensity_seconds,table_seconds"));
}
