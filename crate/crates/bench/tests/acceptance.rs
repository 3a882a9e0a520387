//! End-to-end acceptance gate. Runs every criterion in sequence (timing
//! criteria must not share the CPU with each other) and prints one line each.

use std::process::ExitCode;
use std::time::Instant;

use catalpa::oracle::{check_invariants, Check};
use catalpa::{EpsilonHeap, Heap, HeapConfig, Report, Verifier};
use catalpa_bench::stats::percentile;
use catalpa_bench::sweep::{sweep_point, SweepPoint};
use catalpa_bench::verify::{verify_config, verify_stress};
use catalpa_bench::{interleave, to_csv, to_json, run_workload, CollectorKind, Kind, Session, Stepper, SweepConfig, Workload};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---- 1-4: oracle differential over seeded stress runs ---------------------------

struct StressTotals {
    runs: u64,
    collections: u64,
    failed: Vec<(Check, u64)>,
    first: Vec<String>,
}

fn stress_runs(runs: u64) -> StressTotals {
    let mut totals = StressTotals { runs, collections: 0, failed: Vec::new(), first: Vec::new() };
    let checks = [Check::Safety, Check::BoundedLiveness, Check::NoOldToYoung, Check::Effectiveness];
    let mut failed = [0u64; 4];
    for seed in 0..runs {
        // vary the nursery so collections land at different points
        let nursery = [4 << 10, 8 << 10, 16 << 10, 32 << 10][(seed % 4) as usize];
        let report = verify_stress(seed, 10_000, &verify_config().with_nursery(nursery)).expect("stress run");
        totals.collections += report.collections;
        for (i, &c) in checks.iter().enumerate() {
            failed[i] += report.failed(c);
        }
        if !report.passed() && totals.first.len() < 3 {
            totals.first.extend(report.violations.iter().take(2).map(|v| format!("seed {seed}: {v:?}")));
        }
    }
    totals.failed = checks.iter().copied().zip(failed).collect();
    totals
}

fn stress_criterion(t: &StressTotals, check: Check) -> Outcome {
    let failed = t.failed.iter().find(|(c, _)| *c == check).map_or(0, |&(_, n)| n);
    let mut detail = format!("{} runs, {} collections, {failed} violations", t.runs, t.collections);
    if failed > 0 {
        detail += &format!("; {}", t.first.join("; "));
    }
    outcome(failed == 0, detail)
}

// ---- 5: pause boundedness -------------------------------------------------------

fn pause_boundedness() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [Kind::Nbody, Kind::Raytracer, Kind::Db] {
        let cfg = SweepConfig { kind, ..SweepConfig::default() };
        let points: Vec<SweepPoint> =
            cfg.live_heap_mb.iter().map(|&mb| sweep_point(&cfg, mb).expect("sweep point")).collect();
        let (first, last) = (&points[0], &points[points.len() - 1]);
        let work_ratio = last.work_p99 as f64 / first.work_p99 as f64;
        let mut pauses: Vec<u64> = points.iter().flat_map(|p| p.pause_samples.iter().copied()).collect();
        pauses.sort_unstable();
        let p50 = percentile(&pauses, 50.0).unwrap();
        let p99 = percentile(&pauses, 99.0).unwrap();
        let pause_ratio = p99 as f64 / p50 as f64;
        let ok = work_ratio <= 1.25 && pause_ratio <= 2.0;
        pass &= ok;
        let per_point: Vec<String> = points
            .iter()
            .map(|p| format!("{}MB {:.2}", p.live_heap_mb, p.pause_ns_p99 as f64 / p.pause_ns_p50 as f64))
            .collect();
        parts.push(format!(
            "{kind}: work p99 {}MB/{}MB = {work_ratio:.3}, pause p50 {:.0}us p99 {:.0}us ratio {pause_ratio:.2} (per point {})",
            last.live_heap_mb,
            first.live_heap_mb,
            p50 as f64 / 1e3,
            p99 as f64 / 1e3,
            per_point.join(", ")
        ));
    }
    outcome(pass, parts.join("; "))
}

// ---- 6: memory overhead -----------------------------------------------------------

fn verified_run(kind: Kind, tasks: usize, task_ms: f64, nursery: usize) -> Report {
    let cfg = HeapConfig::default().with_nursery(nursery).with_reserve(64 << 20);
    let mut heap = Heap::new(cfg.clone()).unwrap();
    let verifier = Verifier::new();
    verifier.attach(&mut heap);
    let w = Workload::new(kind, tasks, 7).with_task_ms(task_ms);
    let mut session = Session::new(heap, &w, CollectorKind::Catalpa, &cfg).unwrap();
    session.run().unwrap();
    assert!(session.report().error.is_none(), "{kind} ran out of memory");
    check_invariants(&verifier, session.heap_mut())
}

fn memory_overhead() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [Kind::Nbody, Kind::Raytracer, Kind::Db, Kind::Server, Kind::Stress] {
        let report = verified_run(kind, 20, 0.5, 64 << 10);
        let failed = report.failed(Check::MemoryBound);
        let others = report.violations.iter().filter(|v| v.check != Check::MemoryBound).count();
        pass &= failed == 0 && report.evaluated(Check::MemoryBound) > 0;
        parts.push(format!("{kind}: {} boundaries, {failed} violations ({others} other)", report.evaluated(Check::MemoryBound)));
        if failed > 0 {
            if let Some(v) = report.violations.iter().find(|v| v.check == Check::MemoryBound) {
                parts.push(v.detail.clone());
            }
        }
    }
    outcome(pass, parts.join("; "))
}

// ---- 7: fixed work per allocation ---------------------------------------------------

fn fixed_work() -> Outcome {
    let w = Workload::new(Kind::Server, 200, 11);
    let report = run_workload(&w, CollectorKind::Catalpa, &HeapConfig::default()).unwrap();
    let records = &report.records;
    let allocations: u64 = records.iter().map(|r| r.allocations).sum();
    let q = records.len() / 4;
    let rate = |rs: &[catalpa::CollectionRecord]| {
        rs.iter().map(|r| r.work_units).sum::<u64>() as f64 / rs.iter().map(|r| r.allocations).sum::<u64>() as f64
    };
    let (first, last) = (rate(&records[..q]), rate(&records[records.len() - q..]));
    let drift = (last - first) / first;
    outcome(
        allocations >= 1_000_000 && q > 0 && drift.abs() <= 0.20,
        format!("{allocations} allocations over {} collections; work/alloc Q1 {first:.4} Q4 {last:.4} ({:+.1}%)", records.len(), drift * 100.0),
    )
}

// ---- 8: throughput against epsilon ----------------------------------------------------

fn throughput() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [Kind::Nbody, Kind::Raytracer, Kind::Db, Kind::Server, Kind::Stress] {
        let w = Workload::new(kind, 60, 5);
        let cfg = HeapConfig::default();
        let eps_cfg = HeapConfig::default().with_reserve(2 << 30);
        let mut catalpa = Session::new(Heap::new(cfg.clone()).unwrap(), &w, CollectorKind::Catalpa, &cfg).unwrap();
        let mut epsilon = Session::new(EpsilonHeap::new(eps_cfg.clone()).unwrap(), &w, CollectorKind::Epsilon, &eps_cfg).unwrap();
        interleave(&mut [&mut catalpa as &mut dyn Stepper, &mut epsilon]).unwrap();
        let (c, e) = (catalpa.report(), epsilon.report());
        assert!(c.error.is_none() && e.error.is_none(), "{kind}: {:?} {:?}", c.error, e.error);
        let ratio = c.wall_clock_s / e.wall_clock_s;
        pass &= ratio <= 1.5;
        parts.push(format!("{kind} {ratio:.2}"));
    }
    outcome(pass, format!("catalpa/epsilon wall clock: {}", parts.join(", ")))
}

// ---- 9: survival-rate profile -----------------------------------------------------------

fn survival() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, limit) in [(Kind::Nbody, 0.01), (Kind::Raytracer, 0.01), (Kind::Db, 0.05)] {
        let report = run_workload(&Workload::new(kind, 200, 3), CollectorKind::Catalpa, &HeapConfig::default()).unwrap();
        let rate = report.survival_rate();
        pass &= rate < limit && report.collections() > 0;
        parts.push(format!("{kind} {:.3}% (< {}%)", rate * 100.0, limit * 100.0));
    }
    outcome(pass, parts.join(", "))
}

// ---- 10: path independence ----------------------------------------------------------------

fn path_independence() -> Outcome {
    let tasks = 300;
    let cfg = HeapConfig::default();
    let session = |kind: Kind, tasks: usize| {
        Session::new(Heap::new(cfg.clone()).unwrap(), &Workload::new(kind, tasks, 9), CollectorKind::Catalpa, &cfg).unwrap()
    };
    let mut nbody = session(Kind::Nbody, tasks);
    let mut ray = session(Kind::Raytracer, tasks);
    let mut db = session(Kind::Db, tasks);
    // one mixed task after each uniform one
    let mut mixed = session(Kind::Server, 3 * tasks);
    while !mixed.is_done() {
        for uniform in [&mut nbody, &mut ray, &mut db] {
            uniform.step().unwrap();
            mixed.step().unwrap();
        }
    }
    let mixed = mixed.report().disaggregate().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, uniform) in [(Kind::Nbody, &nbody), (Kind::Raytracer, &ray), (Kind::Db, &db)] {
        let u = uniform.report().task_ms().unwrap();
        let m = mixed[&kind].as_ref().and_then(|r| r.task_ms()).unwrap();
        let shift = (m.mean - u.mean).abs() / u.mean;
        let spread = m.sigma / u.sigma;
        pass &= shift <= 0.05 && spread <= 4.0;
        parts.push(format!(
            "{kind}: mean {:.3} vs {:.3} ms ({:.1}%), sigma {:.3} vs {:.3} ({spread:.2}x), n={}",
            u.mean,
            m.mean,
            shift * 100.0,
            u.sigma,
            m.sigma,
            m.samples
        ));
    }
    outcome(pass, parts.join("; "))
}

// ---- 11: determinism ------------------------------------------------------------------------

fn strip_wall_clock(json: &str) -> serde_json::Value {
    let mut doc: serde_json::Value = serde_json::from_str(json).unwrap();
    let obj = doc.as_object_mut().unwrap();
    for key in ["wall_clock_s", "pause_ns", "task_ms", "per_kind"] {
        obj.remove(key);
    }
    doc
}

fn strip_pause_column(csv: &str) -> String {
    csv.lines().map(|l| l.split(',').enumerate().filter(|&(i, _)| i != 1).map(|(_, f)| f).collect::<Vec<_>>().join(",")).collect::<Vec<_>>().join("\n")
}

fn determinism() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [Kind::Nbody, Kind::Raytracer, Kind::Db, Kind::Server, Kind::Stress] {
        let w = Workload::new(kind, 40, 21);
        let cfg = HeapConfig::default().with_nursery(256 << 10);
        let a = run_workload(&w, CollectorKind::Catalpa, &cfg).unwrap();
        let b = run_workload(&w, CollectorKind::Catalpa, &cfg).unwrap();
        let (ja, jb) = (strip_wall_clock(&to_json(&a).unwrap()), strip_wall_clock(&to_json(&b).unwrap()));
        let (ta, tb) = (serde_json::to_string(&ja).unwrap(), serde_json::to_string(&jb).unwrap());
        let same_json = ta == tb;
        let same_csv = strip_pause_column(&to_csv(&a).unwrap()) == strip_pause_column(&to_csv(&b).unwrap());
        pass &= same_json && same_csv && a.collections() > 0;
        parts.push(format!("{kind}: {} collections, json {} csv {}", a.collections(), same_json, same_csv));
    }
    outcome(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut failures = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("criterion {n:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    };
    let t = Instant::now();
    let stress = stress_runs(1000);
    let stress_time = t.elapsed().as_secs_f64();
    report(1, "safety", stress_criterion(&stress, Check::Safety));
    report(2, "bounded liveness", stress_criterion(&stress, Check::BoundedLiveness));
    report(3, "no old-to-young edges", stress_criterion(&stress, Check::NoOldToYoung));
    report(4, "effectiveness", stress_criterion(&stress, Check::Effectiveness));
    println!("              (stress runs took {stress_time:.1} s)");
    report(5, "pause boundedness", pause_boundedness());
    report(6, "memory overhead", memory_overhead());
    report(7, "fixed work per allocation", fixed_work());
    report(8, "throughput vs epsilon", throughput());
    report(9, "survival rate", survival());
    report(10, "path independence", path_independence());
    report(11, "determinism", determinism());
    println!("acceptance: {} of 11 criteria passed in {:.1} s", 11 - failures, started.elapsed().as_secs_f64());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
