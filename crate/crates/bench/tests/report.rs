use catalpa::HeapConfig;
use catalpa_bench::{emit, run_workload, to_csv, to_json, BenchError, CollectorKind, Format, Kind, StatsReport, Workload};

fn small(kind: Kind, collector: CollectorKind, tasks: usize) -> StatsReport {
    let cfg = HeapConfig::default().with_nursery(128 << 10).with_reserve(256 << 20);
    run_workload(&Workload::new(kind, tasks, 4).with_task_ms(0.5), collector, &cfg).unwrap()
}

#[test]
fn epsilon_never_collects() {
    let r = small(Kind::Raytracer, CollectorKind::Epsilon, 6);
    assert_eq!(r.collections(), 0);
    assert!(r.pause_ns().is_none());
    let doc: serde_json::Value = serde_json::from_str(&to_json(&r).unwrap()).unwrap();
    assert_eq!(doc["collections"], 0);
    assert!(doc["pause_ns"]["p50"].is_null() && doc["pause_ns"]["p99"].is_null());
    assert_eq!(doc["pause_ns"]["samples"], 0);
    assert_eq!(doc["collector"], "epsilon");
}

#[test]
fn json_has_the_documented_fields() {
    let r = small(Kind::Nbody, CollectorKind::Catalpa, 4);
    let doc: serde_json::Value = serde_json::from_str(&to_json(&r).unwrap()).unwrap();
    for key in [
        "workload", "collector", "config", "wall_clock_s", "collections", "survival_rate", "max_committed_bytes",
        "pause_ns", "task_ms", "per_kind",
    ] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    for key in ["p50", "p95", "p99", "mean", "sigma", "samples"] {
        assert!(doc["task_ms"].get(key).is_some(), "missing task_ms.{key}");
    }
    assert_eq!(doc["task_ms"]["samples"], 4);
    assert_eq!(doc["collections"].as_u64().unwrap() as usize, r.collections());
    assert!(r.collections() > 0);
}

#[test]
fn task_latency_covers_its_pauses() {
    let r = small(Kind::Server, CollectorKind::Catalpa, 12);
    let attributed: u64 = r.tasks.iter().map(|t| t.pause_ns).sum();
    for t in &r.tasks {
        assert!(t.latency_ns >= t.pause_ns, "{t:?}");
    }
    assert!(attributed <= r.records.iter().map(|c| c.pause_ns).sum());
}

#[test]
fn server_runs_split_by_kind() {
    let r = small(Kind::Server, CollectorKind::Catalpa, 30);
    let parts = r.disaggregate().unwrap();
    assert_eq!(parts.len(), Kind::SERVED.len());
    let total: usize = parts.values().flatten().map(|p| p.tasks.len()).sum();
    assert_eq!(total, 30);
    for (kind, part) in &parts {
        if let Some(part) = part {
            assert!(part.tasks.iter().all(|t| t.kind == *kind));
            assert_eq!(part.task_ms().unwrap().samples, part.tasks.len());
        }
    }
    let per_kind = r.per_kind();
    assert_eq!(per_kind.len(), Kind::SERVED.len());
}

#[test]
fn kinds_that_drew_no_tasks_are_absent() {
    let r = small(Kind::Server, CollectorKind::Catalpa, 1);
    let parts = r.disaggregate().unwrap();
    assert_eq!(parts.values().filter(|p| p.is_some()).count(), 1);
    assert_eq!(r.per_kind().values().filter(|s| s.is_none()).count(), Kind::SERVED.len() - 1);
}

#[test]
fn uniform_runs_cannot_be_split() {
    let r = small(Kind::Db, CollectorKind::Catalpa, 2);
    assert!(matches!(r.disaggregate(), Err(BenchError::NotMixed(_))));
}

#[test]
fn same_seed_same_trace() {
    let a = small(Kind::Db, CollectorKind::Catalpa, 8);
    let b = small(Kind::Db, CollectorKind::Catalpa, 8);
    let trace = |r: &StatsReport| r.records.iter().map(|c| (c.work_units, c.released, c.marked)).collect::<Vec<_>>();
    assert_eq!(trace(&a), trace(&b));
    assert_eq!(a.allocations, b.allocations);
    let other = run_workload(
        &Workload::new(Kind::Db, 8, 5).with_task_ms(0.5),
        CollectorKind::Catalpa,
        &HeapConfig::default().with_nursery(128 << 10).with_reserve(256 << 20),
    )
    .unwrap();
    assert_ne!(trace(&a), trace(&other));
}

#[test]
fn emit_writes_both_formats() {
    let r = small(Kind::Nbody, CollectorKind::Catalpa, 3);
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    emit(&r, Format::Json, &json).unwrap();
    emit(&r, Format::Csv, &csv).unwrap();
    assert_eq!(std::fs::read_to_string(&json).unwrap().trim_end(), to_json(&r).unwrap());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text, to_csv(&r).unwrap());
    assert_eq!(text.lines().count(), r.collections() + 1);
}

#[test]
fn emit_reports_unwritable_paths() {
    let r = small(Kind::Nbody, CollectorKind::Epsilon, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("r.json");
    assert!(matches!(emit(&r, Format::Json, &path), Err(BenchError::Write { .. })));
    let csv = to_csv(&r).unwrap();
    assert_eq!(csv.lines().count(), 1, "header only");
}
