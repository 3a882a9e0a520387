use thiserror::Error;

use crate::types::TypeId;

/// Errors surfaced to the mutator.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeapError {
    #[error("invalid heap configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("out of memory: {requested} bytes requested with {committed} of {reserve} bytes committed")]
    OutOfMemory { requested: usize, committed: u64, reserve: u64 },
    #[error("contract violation: {0}")]
    Contract(#[from] ContractViolation),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("page_bytes {0} must be a power of two of at least 64")]
    PageSize(usize),
    #[error("word_bytes must be 8, got {0}")]
    WordSize(usize),
    #[error("nursery threshold {nursery} must be a nonzero multiple of page_bytes {page}")]
    Nursery { nursery: usize, page: usize },
    #[error("heap reserve {reserve} must be a nonzero multiple of page_bytes {page}")]
    Reserve { reserve: usize, page: usize },
    #[error("decrement budget factor must be greater than 1")]
    BudgetFactor,
    #[error("bin width must lie in (0, 1]")]
    BinWidth,
    #[error("root region capacity must be nonzero")]
    RootCapacity,
}

/// A mutator broke the interface contract (arity, ref masks, root discipline, registry state).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractViolation {
    #[error("type registry is frozen")]
    RegistryFrozen,
    #[error("type registry is not frozen")]
    RegistryNotFrozen,
    #[error("type registry is full")]
    TooManyTypes,
    #[error("type {name} has {slots} slots; at most 64 are supported")]
    TooManySlots { name: String, slots: usize },
    #[error("type {name} needs {slot_bytes} bytes which exceeds the page size {page_bytes}")]
    ObjectTooLarge { name: String, slot_bytes: usize, page_bytes: usize },
    #[error("ref mask bit {bit} is outside the {slots} slots of {name}")]
    RefMaskOutOfRange { name: String, bit: usize, slots: usize },
    #[error("unknown type {0:?}")]
    UnknownType(TypeId),
    #[error("type {ty:?} takes {expected} fields, got {got}")]
    Arity { ty: TypeId, expected: usize, got: usize },
    #[error("slot {slot} of type {ty:?} holds a reference but a raw word was supplied")]
    ExpectedRef { ty: TypeId, slot: usize },
    #[error("slot {slot} of type {ty:?} holds a raw word but a reference was supplied")]
    ExpectedWord { ty: TypeId, slot: usize },
    #[error("reference {addr:#x} does not name a live object")]
    StaleRef { addr: u64 },
    #[error("slot {slot} out of range for type {ty:?} with {slots} slots")]
    SlotOutOfRange { ty: TypeId, slot: usize, slots: usize },
    #[error("root region overflow")]
    RootOverflow,
    #[error("root region underflow")]
    RootUnderflow,
    #[error("root frame popped out of LIFO order")]
    NonLifoPop,
    #[error("root frame is not live")]
    DeadFrame,
    #[error("index {index} is outside the root frame or global region of length {len}")]
    RootIndex { index: usize, len: usize },
}
