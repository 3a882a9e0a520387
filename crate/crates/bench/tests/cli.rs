use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench")).args(args).output().expect("bench runs")
}

#[test]
fn run_prints_json() {
    let out = bench(&["run", "--workload", "nbody", "--tasks", "3", "--task-ms", "0.2", "--nursery-bytes", "65536"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["workload"], "nbody");
    assert_eq!(doc["collector"], "catalpa");
    assert_eq!(doc["config"]["nursery_bytes"], 65536);
}

#[test]
fn run_writes_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let out = bench(&[
        "run", "--workload", "db", "--tasks", "4", "--task-ms", "0.5", "--nursery-bytes", "65536", "--format", "csv",
        "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("index,pause_ns,work_units"));
    assert!(text.lines().count() > 1);
}

#[test]
fn config_errors_exit_two() {
    for args in [
        &["run", "--workload", "nbody", "--page-bytes", "0"][..],
        &["run", "--workload", "nbody", "--task-ms", "0"],
        &["run", "--workload", "nbody", "--nursery-bytes", "5000"],
        &["run", "--workload", "quicksort"],
        &["sweep", "--collections", "0"],
        &["frobnicate"],
    ] {
        let out = bench(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn exhausted_heap_exits_one() {
    let out = bench(&[
        "run", "--workload", "db", "--tasks", "20", "--nursery-bytes", "65536", "--reserve-bytes", "16384",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of memory"));
}

#[test]
fn verify_passes_on_small_run() {
    let out = bench(&["verify", "--seed", "3", "--nodes", "3000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["collections"].as_u64().unwrap() > 0);
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn sweep_reports_each_point() {
    let out = bench(&["sweep", "--live-heap-mb", "1,2", "--workload", "nbody", "--collections", "3", "--task-ms", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let points: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[1]["live_heap_mb"], 2);
    assert_eq!(points[0]["collections"], 3);
}
