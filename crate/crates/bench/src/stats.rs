//! Sample summaries and the run report.

use std::collections::BTreeMap;

use catalpa::CollectionRecord;
use serde::{Deserialize, Serialize};

use crate::error::BenchError;
use crate::workload::Kind;

/// Nearest-rank percentile of an ascending slice. `None` when empty.
pub fn percentile<T: Copy>(sorted: &[T], p: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub mean: f64,
    pub sigma: f64,
    pub samples: usize,
}

impl Summary {
    /// Population statistics of `xs`; `None` for an empty list.
    pub fn of(xs: &[f64]) -> Option<Self> {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Summary {
            p50: percentile(&sorted, 50.0)?,
            p95: percentile(&sorted, 95.0)?,
            p99: percentile(&sorted, 99.0)?,
            mean,
            sigma: var.sqrt(),
            samples: sorted.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSample {
    pub kind: Kind,
    pub latency_ns: u64,
    /// Collection pauses that fell inside the task.
    pub pause_ns: u64,
    pub collections: u32,
}

impl TaskSample {
    pub fn ms(&self) -> f64 {
        self.latency_ns as f64 / 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CollectorKind {
    Catalpa,
    Epsilon,
}

impl CollectorKind {
    pub fn name(self) -> &'static str {
        match self {
            CollectorKind::Catalpa => "catalpa",
            CollectorKind::Epsilon => "epsilon",
        }
    }
}

#[derive(Debug, Clone)]
pub struct StatsReport {
    pub workload: Kind,
    pub collector: CollectorKind,
    pub page_bytes: usize,
    pub nursery_bytes: usize,
    pub seed: u64,
    pub tasks: Vec<TaskSample>,
    pub records: Vec<CollectionRecord>,
    pub wall_clock_s: f64,
    pub max_committed_bytes: u64,
    pub allocations: u64,
    /// Set when the run stopped early; the samples cover the completed tasks.
    pub error: Option<String>,
}

impl StatsReport {
    pub fn collections(&self) -> usize {
        self.records.len()
    }

    /// Surviving bytes over nursery bytes, summed across collections.
    pub fn survival_rate(&self) -> f64 {
        let survived: u64 = self.records.iter().map(|r| r.survivor_bytes).sum();
        let allocated: u64 = self.records.iter().map(|r| r.nursery_bytes).sum();
        if allocated == 0 {
            0.0
        } else {
            survived as f64 / allocated as f64
        }
    }

    pub fn task_ms(&self) -> Option<Summary> {
        Summary::of(&self.tasks.iter().map(TaskSample::ms).collect::<Vec<_>>())
    }

    pub fn task_ms_of(&self, kind: Kind) -> Option<Summary> {
        Summary::of(&self.tasks.iter().filter(|t| t.kind == kind).map(TaskSample::ms).collect::<Vec<_>>())
    }

    pub fn pause_ns(&self) -> Option<Summary> {
        Summary::of(&self.records.iter().map(|r| r.pause_ns as f64).collect::<Vec<_>>())
    }

    pub fn work_units(&self) -> Option<Summary> {
        Summary::of(&self.records.iter().map(|r| r.work_units as f64).collect::<Vec<_>>())
    }

    /// Splits a server run's samples by the kind of task that produced them.
    /// Kinds that drew no tasks map to `None`.
    pub fn disaggregate(&self) -> Result<BTreeMap<Kind, Option<StatsReport>>, BenchError> {
        if self.workload != Kind::Server {
            return Err(BenchError::NotMixed(self.workload.to_string()));
        }
        Ok(Kind::SERVED
            .iter()
            .map(|&kind| {
                let tasks: Vec<TaskSample> = self.tasks.iter().filter(|t| t.kind == kind).copied().collect();
                let part = (!tasks.is_empty()).then(|| StatsReport {
                    workload: kind,
                    tasks,
                    records: Vec::new(),
                    ..self.clone()
                });
                (kind, part)
            })
            .collect())
    }

    /// Per-kind task latency summaries; a uniform run has a single entry.
    pub fn per_kind(&self) -> BTreeMap<Kind, Option<Summary>> {
        if self.workload == Kind::Server {
            Kind::SERVED.iter().map(|&k| (k, self.task_ms_of(k))).collect()
        } else {
            BTreeMap::from([(self.workload, self.task_ms())])
        }
    }
}
