//! Heap notifications consumed by the verification oracle.

use crate::collector::CollectionRecord;
use crate::heap::Heap;
use crate::mutator::Value;
use crate::types::TypeId;

#[derive(Debug, Clone, PartialEq)]
pub enum HeapEvent {
    Construct { addr: u64, ty: TypeId, fields: Vec<Value> },
    RootPush { values: Vec<Value> },
    RootPop { count: usize },
    RootSet { position: usize, value: Value },
    GlobalSet { index: usize, value: Value },
    CollectionStart { index: u64 },
    /// A young survivor was copied out of the nursery.
    Evacuate { from: u64, to: u64 },
    /// An unmarked young object was reclaimed by the nursery sweep.
    Reclaim { addr: u64 },
    /// An old object was released by the decrement walk.
    Release { addr: u64 },
    /// The collector read or wrote the header of an object that was old before this collection.
    Touch { addr: u64 },
    CollectionEnd { record: CollectionRecord },
}

/// Called at the end of every collection, before control returns to the mutator.
pub trait CollectionObserver {
    fn on_boundary(&mut self, heap: &Heap, events: Vec<HeapEvent>);
}
