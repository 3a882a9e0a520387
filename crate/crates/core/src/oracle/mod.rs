//! Independent shadow model of the object graph and roots, used as ground
//! truth for safety, liveness, reference-count and layout checks.
//!
//! The oracle reads the heap only through its event stream and public
//! inspection methods.

mod shadow;
mod verify;

pub use shadow::{NodeId, RootWord, ShadowField, ShadowGraph, ShadowNode};
pub use verify::{check_invariants, Check, Report, Tally, Verifier, Violation};
