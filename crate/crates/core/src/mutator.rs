//! The client-facing allocation and root interface.

use serde::{Deserialize, Serialize};

use crate::collector::CollectionRecord;
use crate::config::WORD_BYTES;
use crate::error::{ContractViolation, HeapError};
use crate::events::HeapEvent;
use crate::heap::Heap;
use crate::roots::FrameToken;
use crate::types::{RefMask, TypeId, TypeRegistry};

/// A reference to an allocated object. Stays valid across collections only
/// while it is held in a root region (rooted objects are never moved).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectRef {
    pub addr: u64,
    pub ty: TypeId,
}

/// A field or root word: either an opaque machine word or a heap reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Value {
    Word(u64),
    Ref(ObjectRef),
}

impl Value {
    /// The bit pattern stored in memory.
    pub fn raw(self) -> u64 {
        match self {
            Value::Word(w) => w,
            Value::Ref(r) => r.addr,
        }
    }

    pub fn as_ref(self) -> Option<ObjectRef> {
        match self {
            Value::Ref(r) => Some(r),
            Value::Word(_) => None,
        }
    }

    pub fn as_word(self) -> Option<u64> {
        match self {
            Value::Word(w) => Some(w),
            Value::Ref(_) => None,
        }
    }
}

impl From<ObjectRef> for Value {
    fn from(r: ObjectRef) -> Self {
        Value::Ref(r)
    }
}

impl From<u64> for Value {
    fn from(w: u64) -> Self {
        Value::Word(w)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Word(x.to_bits())
    }
}

/// Operations every collector exposes to application code. Objects are
/// immutable: `construct` is the only field write.
pub trait Mutator {
    fn register_type(&mut self, name: &str, slot_count: usize, ref_mask: RefMask) -> Result<TypeId, HeapError>;

    /// Freezes the type registry; implied by the first `construct`.
    fn freeze(&mut self);

    fn registry(&self) -> &TypeRegistry;

    fn construct(&mut self, ty: TypeId, fields: &[Value]) -> Result<ObjectRef, HeapError>;

    fn read_field(&self, obj: ObjectRef, slot: usize) -> Result<Value, HeapError>;

    fn root_push(&mut self, values: &[Value]) -> Result<FrameToken, HeapError>;

    fn root_pop(&mut self, frame: FrameToken) -> Result<(), HeapError>;

    fn root_set(&mut self, frame: FrameToken, index: usize, value: Value) -> Result<(), HeapError>;

    fn set_global(&mut self, index: usize, value: Value) -> Result<(), HeapError>;

    /// One record per completed collection.
    fn records(&self) -> &[CollectionRecord];

    fn committed_bytes(&self) -> u64;

    fn allocations(&self) -> u64;

    /// Reads a raw field as `f64`.
    fn read_f64(&self, obj: ObjectRef, slot: usize) -> Result<f64, HeapError> {
        Ok(f64::from_bits(self.read_field(obj, slot)?.raw()))
    }

    fn read_word(&self, obj: ObjectRef, slot: usize) -> Result<u64, HeapError> {
        Ok(self.read_field(obj, slot)?.raw())
    }

    fn read_ref(&self, obj: ObjectRef, slot: usize) -> Result<ObjectRef, HeapError> {
        match self.read_field(obj, slot)? {
            Value::Ref(r) => Ok(r),
            Value::Word(_) => Err(HeapError::Contract(ContractViolation::ExpectedRef { ty: obj.ty, slot })),
        }
    }
}

impl Mutator for Heap {
    fn register_type(&mut self, name: &str, slot_count: usize, ref_mask: RefMask) -> Result<TypeId, HeapError> {
        Ok(self.registry.register(name, slot_count, ref_mask, self.config.page_bytes)?)
    }

    fn freeze(&mut self) {
        self.freeze_registry();
    }

    fn registry(&self) -> &TypeRegistry {
        &self.registry
    }

    fn construct(&mut self, ty: TypeId, fields: &[Value]) -> Result<ObjectRef, HeapError> {
        self.freeze_registry();
        let desc = self.registry.get(ty).ok_or(ContractViolation::UnknownType(ty))?;
        if fields.len() != desc.slot_count {
            return Err(ContractViolation::Arity { ty, expected: desc.slot_count, got: fields.len() }.into());
        }
        let mask = desc.ref_mask;
        for (slot, field) in fields.iter().enumerate() {
            match (mask.contains(slot), field) {
                (true, Value::Ref(r)) => {
                    self.check_ref(r.addr, Some(r.ty))?;
                }
                (true, Value::Word(_)) => return Err(ContractViolation::ExpectedRef { ty, slot }.into()),
                (false, Value::Ref(_)) => return Err(ContractViolation::ExpectedWord { ty, slot }.into()),
                (false, Value::Word(_)) => {}
            }
        }

        // Reference arguments stay rooted across a collection triggered by this allocation.
        let frame = if mask == RefMask::EMPTY {
            None
        } else {
            let token = self.roots.push(fields.iter().filter_map(|f| f.as_ref()).map(|r| r.addr))?;
            self.emit(|| HeapEvent::RootPush {
                values: fields.iter().copied().filter(|f| matches!(f, Value::Ref(_))).collect(),
            });
            Some(token)
        };
        let result = self.alloc(ty);
        if let Some(token) = frame {
            let count = self.roots.pop(token)?;
            self.emit(|| HeapEvent::RootPop { count });
        }
        let addr = result?;

        for (i, field) in fields.iter().enumerate() {
            self.write(addr + ((i + 1) * WORD_BYTES) as u64, field.raw());
        }
        if fields.is_empty() {
            self.write(addr + WORD_BYTES as u64, 0);
        }
        self.emit(|| HeapEvent::Construct { addr, ty, fields: fields.to_vec() });
        Ok(ObjectRef { addr, ty })
    }

    fn read_field(&self, obj: ObjectRef, slot: usize) -> Result<Value, HeapError> {
        self.check_ref(obj.addr, Some(obj.ty))?;
        let desc = self.registry.get(obj.ty).ok_or(ContractViolation::UnknownType(obj.ty))?;
        if slot >= desc.slot_count {
            return Err(ContractViolation::SlotOutOfRange { ty: obj.ty, slot, slots: desc.slot_count }.into());
        }
        let word = self.read(obj.addr + ((slot + 1) * WORD_BYTES) as u64);
        if desc.ref_mask.contains(slot) {
            Ok(Value::Ref(ObjectRef { addr: word, ty: self.header(word).type_id() }))
        } else {
            Ok(Value::Word(word))
        }
    }

    fn root_push(&mut self, values: &[Value]) -> Result<FrameToken, HeapError> {
        for v in values {
            if let Value::Ref(r) = v {
                self.check_ref(r.addr, Some(r.ty))?;
            }
        }
        let token = self.roots.push(values.iter().map(|v| v.raw()))?;
        self.emit(|| HeapEvent::RootPush { values: values.to_vec() });
        Ok(token)
    }

    fn root_pop(&mut self, frame: FrameToken) -> Result<(), HeapError> {
        let count = self.roots.pop(frame)?;
        self.emit(|| HeapEvent::RootPop { count });
        Ok(())
    }

    fn root_set(&mut self, frame: FrameToken, index: usize, value: Value) -> Result<(), HeapError> {
        if let Value::Ref(r) = value {
            self.check_ref(r.addr, Some(r.ty))?;
        }
        let position = self.roots.set(frame, index, value.raw())?;
        self.emit(|| HeapEvent::RootSet { position, value });
        Ok(())
    }

    fn set_global(&mut self, index: usize, value: Value) -> Result<(), HeapError> {
        if let Value::Ref(r) = value {
            self.check_ref(r.addr, Some(r.ty))?;
        }
        self.roots.set_global(index, value.raw())?;
        self.emit(|| HeapEvent::GlobalSet { index, value });
        Ok(())
    }

    fn records(&self) -> &[CollectionRecord] {
        &self.records
    }

    fn committed_bytes(&self) -> u64 {
        Heap::committed_bytes(self)
    }

    fn allocations(&self) -> u64 {
        self.total_allocs
    }
}
