//! Drives a workload through one collector and gathers a report.

use std::time::Instant;

use catalpa::{EpsilonHeap, Heap, HeapConfig, HeapError, Mutator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::BenchError;
use crate::stats::{CollectorKind, StatsReport, TaskSample};
use crate::workload::{Kind, Workload, World};

/// Seeds the stream that picks a server run's task kinds, kept apart from the
/// kernels' stream.
const PICK_STREAM: u64 = 0x5eed0f7a5c;

/// The kernel a task of `kind` runs: server tasks draw one of the served kinds.
pub fn pick_kind(kind: Kind, picker: &mut ChaCha8Rng) -> Kind {
    match kind {
        Kind::Server => Kind::SERVED[picker.gen_range(0..Kind::SERVED.len())],
        k => k,
    }
}

/// A workload in progress on one heap, advanced a task at a time.
pub struct Session<M: Mutator> {
    heap: M,
    world: World,
    workload: Workload,
    picker: ChaCha8Rng,
    report: StatsReport,
    elapsed_ns: u64,
}

impl<M: Mutator> Session<M> {
    pub fn new(mut heap: M, w: &Workload, collector: CollectorKind, cfg: &HeapConfig) -> Result<Self, BenchError> {
        if w.task_ms.is_nan() || w.task_ms <= 0.0 {
            return Err(BenchError::Config(format!("task time must be positive, got {}", w.task_ms)));
        }
        let start = Instant::now();
        let world = World::new(&mut heap, &[w.kind], w.seed)?;
        let report = StatsReport {
            workload: w.kind,
            collector,
            page_bytes: cfg.page_bytes,
            nursery_bytes: cfg.nursery_threshold_bytes,
            seed: w.seed,
            tasks: Vec::with_capacity(w.tasks),
            records: Vec::new(),
            wall_clock_s: 0.0,
            max_committed_bytes: heap.committed_bytes(),
            allocations: 0,
            error: None,
        };
        Ok(Self {
            heap,
            world,
            workload: w.clone(),
            picker: ChaCha8Rng::seed_from_u64(w.seed ^ PICK_STREAM),
            report,
            elapsed_ns: start.elapsed().as_nanos() as u64,
        })
    }

    pub fn is_done(&self) -> bool {
        self.report.error.is_some() || self.report.tasks.len() >= self.workload.tasks
    }

    /// Runs the next task. Out-of-memory ends the session with the report
    /// flagged; other heap errors are returned.
    pub fn step(&mut self) -> Result<(), BenchError> {
        if self.is_done() {
            return Ok(());
        }
        let kind = pick_kind(self.workload.kind, &mut self.picker);
        let steps = self.workload.steps(kind);
        let before = self.heap.records().len();
        let t0 = Instant::now();
        let outcome = self.world.task(&mut self.heap, kind, steps);
        let latency_ns = t0.elapsed().as_nanos() as u64;
        self.elapsed_ns += latency_ns;
        self.report.max_committed_bytes = self.report.max_committed_bytes.max(self.heap.committed_bytes());
        match outcome {
            Ok(()) => {
                let during = &self.heap.records()[before..];
                self.report.tasks.push(TaskSample {
                    kind,
                    latency_ns,
                    pause_ns: during.iter().map(|r| r.pause_ns).sum(),
                    collections: during.len() as u32,
                });
                Ok(())
            }
            Err(e @ HeapError::OutOfMemory { .. }) => {
                self.report.error = Some(e.to_string());
                Ok(())
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn run(&mut self) -> Result<(), BenchError> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(())
    }

    pub fn heap(&self) -> &M {
        &self.heap
    }

    pub fn heap_mut(&mut self) -> &mut M {
        &mut self.heap
    }

    /// The report so far. Wall clock counts only time spent in this session.
    pub fn report(&self) -> StatsReport {
        let mut report = self.report.clone();
        report.records = self.heap.records().to_vec();
        report.allocations = self.heap.allocations();
        report.wall_clock_s = self.elapsed_ns as f64 / 1e9;
        report
    }
}

/// Object-safe view of a session so runs on different heaps can be interleaved.
pub trait Stepper {
    fn step(&mut self) -> Result<(), BenchError>;
    fn is_done(&self) -> bool;
}

impl<M: Mutator> Stepper for Session<M> {
    fn step(&mut self) -> Result<(), BenchError> {
        Session::step(self)
    }

    fn is_done(&self) -> bool {
        Session::is_done(self)
    }
}

/// Advances the sessions round-robin, one task each, until all are done, so
/// slow stretches of machine time fall on all of them alike.
pub fn interleave(sessions: &mut [&mut dyn Stepper]) -> Result<(), BenchError> {
    while sessions.iter().any(|s| !s.is_done()) {
        for s in sessions.iter_mut() {
            s.step()?;
        }
    }
    Ok(())
}

pub fn run_workload(w: &Workload, collector: CollectorKind, cfg: &HeapConfig) -> Result<StatsReport, BenchError> {
    cfg.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    match collector {
        CollectorKind::Catalpa => run_on(Heap::new(cfg.clone())?, w, collector, cfg),
        CollectorKind::Epsilon => run_on(EpsilonHeap::new(cfg.clone())?, w, collector, cfg),
    }
}

pub fn run_on<M: Mutator>(heap: M, w: &Workload, collector: CollectorKind, cfg: &HeapConfig) -> Result<StatsReport, BenchError> {
    let mut session = Session::new(heap, w, collector, cfg)?;
    session.run()?;
    Ok(session.report())
}
