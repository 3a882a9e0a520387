//! A hybrid generational collector over a simulated heap: a copying and
//! promoting nursery in front of a reference-counted old space, with no write
//! barriers and no remembered sets.
//!
//! Objects are immutable once constructed, so old objects can never point at
//! young ones. Roots are scanned conservatively; objects they reference are
//! promoted in place, everything else that survives is evacuated.

pub mod bitset;
pub mod collector;
pub mod config;
pub mod epsilon;
pub mod error;
pub mod events;
pub mod header;
pub mod heap;
pub mod inspect;
pub mod mutator;
pub mod oracle;
pub mod page;
pub mod roots;
pub mod types;

pub use collector::{CollectionRecord, WorkBound};
pub use config::HeapConfig;
pub use epsilon::EpsilonHeap;
pub use error::{ConfigError, ContractViolation, HeapError};
pub use events::{CollectionObserver, HeapEvent};
pub use heap::Heap;
pub use mutator::{Mutator, ObjectRef, Value};
pub use oracle::{Report, Verifier};
pub use roots::FrameToken;
pub use types::{RefMask, TypeId};
