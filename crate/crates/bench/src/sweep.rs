//! Pause cost against live old-heap size at a fixed nursery.

use catalpa::{Heap, HeapConfig, Mutator, ObjectRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::BenchError;
use crate::run::pick_kind;
use crate::stats::percentile;
use crate::workload::{Kind, Workload, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub live_heap_mb: Vec<usize>,
    pub nursery_bytes: usize,
    pub page_bytes: usize,
    pub kind: Kind,
    /// Collections measured per point.
    pub collections: usize,
    /// Collections run and discarded after the live heap is built.
    pub warmup: usize,
    pub seed: u64,
    pub task_ms: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            live_heap_mb: vec![1, 2, 4, 8, 16, 32, 64],
            nursery_bytes: 2 << 20,
            page_bytes: 4096,
            kind: Kind::Raytracer,
            collections: 1000,
            warmup: 10,
            seed: 1,
            task_ms: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub live_heap_mb: usize,
    pub live_bytes: u64,
    pub collections: usize,
    pub work_p50: u64,
    pub work_p95: u64,
    pub work_p99: u64,
    pub pause_ns_p50: u64,
    pub pause_ns_p95: u64,
    pub pause_ns_p99: u64,
    pub max_committed_bytes: u64,
    /// Pause of every measured collection, in order.
    #[serde(skip)]
    pub pause_samples: Vec<u64>,
}

const LIVE_GLOBAL: usize = 255;

/// Builds about `bytes` of long-lived objects reachable from one global: a
/// list whose cells each carry a three-word payload.
fn build_live<M: Mutator>(m: &mut M, world: &World, bytes: u64) -> Result<u64, BenchError> {
    let t = world.types;
    let registry = m.registry();
    let cell = (registry.get(t.cons).expect("registered").slot_bytes()
        + registry.get(t.vec3).expect("registered").slot_bytes()) as u64;
    let count = bytes / cell;
    let frame = m.root_push(&[world.nil().into()])?;
    let mut list: ObjectRef = world.nil();
    for i in 0..count {
        let payload = m.construct(t.vec3, &[i.into(), (i * 3).into(), (i * 7).into()])?;
        list = m.construct(t.cons, &[payload.into(), list.into()])?;
        m.root_set(frame, 0, list.into())?;
    }
    m.set_global(LIVE_GLOBAL, list.into())?;
    m.root_pop(frame)?;
    Ok(count * cell)
}

pub fn sweep_point(cfg: &SweepConfig, live_mb: usize) -> Result<SweepPoint, BenchError> {
    if cfg.collections == 0 {
        return Err(BenchError::Config("a sweep point needs at least one collection".into()));
    }
    let live = (live_mb as u64) << 20;
    let heap_cfg = HeapConfig::default()
        .with_page(cfg.page_bytes)
        .with_nursery(cfg.nursery_bytes)
        .with_reserve(((2 * live_mb + 64) << 20).next_multiple_of(cfg.page_bytes));
    heap_cfg.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    let mut heap = Heap::new(heap_cfg)?;
    let mut world = World::new(&mut heap, &[cfg.kind], cfg.seed)?;
    let live_bytes = build_live(&mut heap, &world, live)?;
    let skip = heap.records().len() + cfg.warmup;
    let w = Workload::new(cfg.kind, 0, cfg.seed).with_task_ms(cfg.task_ms);
    let mut picker = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut max_committed = 0;
    while heap.records().len() < skip + cfg.collections {
        let kind = pick_kind(cfg.kind, &mut picker);
        world.task(&mut heap, kind, w.steps(kind))?;
        max_committed = max_committed.max(heap.committed_bytes());
    }
    let measured = &heap.records()[skip..skip + cfg.collections];
    let mut work: Vec<u64> = measured.iter().map(|r| r.work_units).collect();
    let samples: Vec<u64> = measured.iter().map(|r| r.pause_ns).collect();
    let mut pause = samples.clone();
    work.sort_unstable();
    pause.sort_unstable();
    let q = |xs: &[u64], p| percentile(xs, p).expect("at least one collection");
    let point = SweepPoint {
        live_heap_mb: live_mb,
        live_bytes,
        collections: measured.len(),
        work_p50: q(&work, 50.0),
        work_p95: q(&work, 95.0),
        work_p99: q(&work, 99.0),
        pause_ns_p50: q(&pause, 50.0),
        pause_ns_p95: q(&pause, 95.0),
        pause_ns_p99: q(&pause, 99.0),
        max_committed_bytes: max_committed,
        pause_samples: samples,
    };
    log::info!("sweep {live_mb} MB: work p99 {} pause p50/p99 {}/{} ns", point.work_p99, point.pause_ns_p50, point.pause_ns_p99);
    Ok(point)
}

pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepPoint>, BenchError> {
    cfg.live_heap_mb.iter().map(|&mb| sweep_point(cfg, mb)).collect()
}
