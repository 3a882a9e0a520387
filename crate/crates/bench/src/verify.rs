//! Stress runs under the shadow-graph oracle.

use catalpa::oracle::check_invariants;
use catalpa::{Heap, HeapConfig, Mutator, Report, Verifier};

use crate::error::BenchError;
use crate::workload::{Kind, World};

/// Nursery for verification runs: small, so short runs still collect often.
pub const VERIFY_NURSERY: usize = 16 << 10;

/// Runs the stress kernel until `nodes` objects were allocated, checking every
/// collection boundary and the final state.
pub fn verify_stress(seed: u64, nodes: u64, cfg: &HeapConfig) -> Result<Report, BenchError> {
    cfg.validate().map_err(|e| BenchError::Config(e.to_string()))?;
    let mut heap = Heap::new(cfg.clone())?;
    let verifier = Verifier::new();
    verifier.attach(&mut heap);
    let mut world = World::new(&mut heap, &[Kind::Stress], seed)?;
    while heap.allocations() < nodes {
        world.stress_step(&mut heap)?;
    }
    Ok(check_invariants(&verifier, &mut heap))
}

pub fn verify_config() -> HeapConfig {
    HeapConfig::default().with_nursery(VERIFY_NURSERY).with_reserve(64 << 20)
}
