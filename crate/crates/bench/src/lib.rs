//! Benchmark workloads, run statistics and report emission for the catalpa
//! collector, with a never-collecting epsilon heap as the throughput baseline.

pub mod emit;
pub mod error;
pub mod run;
pub mod stats;
pub mod sweep;
pub mod verify;
pub mod workload;

pub use emit::{emit, to_csv, to_json, Document, Format};
pub use error::BenchError;
pub use run::{interleave, run_on, run_workload, Session, Stepper};
pub use stats::{CollectorKind, StatsReport, Summary, TaskSample};
pub use sweep::{sweep, SweepConfig, SweepPoint};
pub use verify::verify_stress;
pub use workload::{Kind, Workload, World};
