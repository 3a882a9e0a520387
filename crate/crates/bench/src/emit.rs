//! Stable JSON and CSV documents for a run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::BenchError;
use crate::stats::{percentile, StatsReport, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub page_bytes: usize,
    pub nursery_bytes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauseDoc {
    pub p50: Option<u64>,
    pub p95: Option<u64>,
    pub p99: Option<u64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkDoc {
    pub p50: Option<u64>,
    pub p95: Option<u64>,
    pub p99: Option<u64>,
    pub total: u64,
    /// Work units of every collection, in order.
    pub trace: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleasedDoc {
    pub total: u64,
    pub trace: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub workload: String,
    pub collector: String,
    pub config: ConfigDoc,
    pub wall_clock_s: f64,
    pub collections: usize,
    pub survival_rate: f64,
    pub max_committed_bytes: u64,
    pub pause_ns: PauseDoc,
    pub task_ms: Option<Summary>,
    pub per_kind: BTreeMap<String, Option<Summary>>,
    pub work_units: WorkDoc,
    pub released: ReleasedDoc,
    pub allocations: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

fn quantiles(mut xs: Vec<u64>) -> [Option<u64>; 3] {
    xs.sort_unstable();
    [percentile(&xs, 50.0), percentile(&xs, 95.0), percentile(&xs, 99.0)]
}

impl From<&StatsReport> for Document {
    fn from(r: &StatsReport) -> Self {
        let pauses: Vec<u64> = r.records.iter().map(|c| c.pause_ns).collect();
        let work: Vec<u64> = r.records.iter().map(|c| c.work_units).collect();
        let [p50, p95, p99] = quantiles(pauses.clone());
        let [w50, w95, w99] = quantiles(work.clone());
        Document {
            workload: r.workload.to_string(),
            collector: r.collector.name().to_owned(),
            config: ConfigDoc { page_bytes: r.page_bytes, nursery_bytes: r.nursery_bytes, seed: r.seed },
            wall_clock_s: r.wall_clock_s,
            collections: r.collections(),
            survival_rate: r.survival_rate(),
            max_committed_bytes: r.max_committed_bytes,
            pause_ns: PauseDoc { p50, p95, p99, samples: pauses.len() },
            task_ms: r.task_ms(),
            per_kind: r.per_kind().into_iter().map(|(k, s)| (k.to_string(), s)).collect(),
            work_units: WorkDoc { p50: w50, p95: w95, p99: w99, total: work.iter().sum(), trace: work },
            released: ReleasedDoc {
                total: r.records.iter().map(|c| c.released).sum(),
                trace: r.records.iter().map(|c| c.released).collect(),
            },
            allocations: r.allocations,
            error: r.error.clone(),
        }
    }
}

pub fn to_json(report: &StatsReport) -> Result<String, BenchError> {
    Ok(serde_json::to_string_pretty(&Document::from(report))?)
}

/// One header row, then one row per collection.
pub fn to_csv(report: &StatsReport) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if report.records.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for record in &report.records {
        w.serialize(record)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Column names, for documents with no rows to derive them from.
pub const CSV_HEADER: [&str; 15] = [
    "index",
    "pause_ns",
    "work_units",
    "marked",
    "evacuated",
    "promoted_in_place",
    "reclaimed",
    "released",
    "deferred_backlog",
    "committed_bytes",
    "survivor_bytes",
    "nursery_bytes",
    "allocations",
    "budget",
    "root_words",
];

pub fn emit(report: &StatsReport, format: Format, path: &Path) -> Result<(), BenchError> {
    let text = match format {
        Format::Json => to_json(report)?,
        Format::Csv => to_csv(report)?,
    };
    let write = |path: &Path| -> std::io::Result<()> {
        let mut f = File::create(path)?;
        f.write_all(text.as_bytes())?;
        if format == Format::Json {
            f.write_all(b"\n")?;
        }
        Ok(())
    };
    write(path).map_err(|source| BenchError::Write { path: path.to_owned(), source })
}

#[cfg(test)]
mod tests {
    use catalpa::CollectionRecord;

    use super::*;

    #[test]
    fn header_matches_record_fields() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(CollectionRecord::default()).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    }
}
