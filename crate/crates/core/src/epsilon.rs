//! Baseline allocator that never reclaims: a bump pointer over the reserve.

use crate::collector::CollectionRecord;
use crate::config::{HeapConfig, WORD_BYTES};
use crate::error::{ContractViolation, HeapError};
use crate::heap::HEAP_BASE;
use crate::mutator::{Mutator, ObjectRef, Value};
use crate::roots::{FrameToken, RootRegion};
use crate::types::{RefMask, TypeId, TypeRegistry};

#[derive(Debug)]
pub struct EpsilonHeap {
    config: HeapConfig,
    registry: TypeRegistry,
    slot_bytes: Vec<usize>,
    pages: Vec<Box<[u64]>>,
    top: u64,
    roots: RootRegion,
    allocations: u64,
}

impl EpsilonHeap {
    pub fn new(config: HeapConfig) -> Result<Self, HeapError> {
        config.validate()?;
        Ok(Self {
            roots: RootRegion::new(config.root_capacity_words, config.global_words),
            config,
            registry: TypeRegistry::new(),
            slot_bytes: Vec::new(),
            pages: Vec::new(),
            top: HEAP_BASE,
            allocations: 0,
        })
    }

    fn word_mut(&mut self, addr: u64) -> &mut u64 {
        let off = (addr - HEAP_BASE) as usize;
        &mut self.pages[off / self.config.page_bytes][off % self.config.page_bytes / WORD_BYTES]
    }

    fn word(&self, addr: u64) -> u64 {
        let off = (addr - HEAP_BASE) as usize;
        self.pages[off / self.config.page_bytes][off % self.config.page_bytes / WORD_BYTES]
    }

    fn check(&self, r: ObjectRef) -> Result<(), ContractViolation> {
        if r.addr < HEAP_BASE || r.addr >= self.top || !r.addr.is_multiple_of(WORD_BYTES as u64) || self.word(r.addr) != u64::from(r.ty.0) {
            return Err(ContractViolation::StaleRef { addr: r.addr });
        }
        Ok(())
    }

    fn bump(&mut self, bytes: usize) -> Result<u64, HeapError> {
        let end = self.top - HEAP_BASE + bytes as u64;
        if end > self.config.heap_reserve_bytes as u64 {
            return Err(HeapError::OutOfMemory {
                requested: bytes,
                committed: self.committed_bytes(),
                reserve: self.config.heap_reserve_bytes as u64,
            });
        }
        let words = self.config.page_bytes / WORD_BYTES;
        while ((self.pages.len() * self.config.page_bytes) as u64) < end {
            self.pages.push(vec![0u64; words].into_boxed_slice());
        }
        let addr = self.top;
        self.top += bytes as u64;
        Ok(addr)
    }
}

impl Mutator for EpsilonHeap {
    fn register_type(&mut self, name: &str, slot_count: usize, ref_mask: RefMask) -> Result<TypeId, HeapError> {
        Ok(self.registry.register(name, slot_count, ref_mask, self.config.page_bytes)?)
    }

    fn freeze(&mut self) {
        if !self.registry.is_frozen() {
            self.registry.freeze(self.config.page_bytes);
            self.slot_bytes = self.registry.types().iter().map(|t| t.slot_bytes()).collect();
        }
    }

    fn registry(&self) -> &TypeRegistry {
        &self.registry
    }

    fn construct(&mut self, ty: TypeId, fields: &[Value]) -> Result<ObjectRef, HeapError> {
        self.freeze();
        let desc = self.registry.get(ty).ok_or(ContractViolation::UnknownType(ty))?;
        if fields.len() != desc.slot_count {
            return Err(ContractViolation::Arity { ty, expected: desc.slot_count, got: fields.len() }.into());
        }
        for (slot, field) in fields.iter().enumerate() {
            match (desc.ref_mask.contains(slot), field) {
                (true, Value::Ref(r)) => self.check(*r)?,
                (true, Value::Word(_)) => return Err(ContractViolation::ExpectedRef { ty, slot }.into()),
                (false, Value::Ref(_)) => return Err(ContractViolation::ExpectedWord { ty, slot }.into()),
                (false, Value::Word(_)) => {}
            }
        }
        let addr = self.bump(self.slot_bytes[ty.index()])?;
        *self.word_mut(addr) = u64::from(ty.0);
        for (i, field) in fields.iter().enumerate() {
            *self.word_mut(addr + ((i + 1) * WORD_BYTES) as u64) = field.raw();
        }
        self.allocations += 1;
        Ok(ObjectRef { addr, ty })
    }

    fn read_field(&self, obj: ObjectRef, slot: usize) -> Result<Value, HeapError> {
        self.check(obj)?;
        let desc = self.registry.get(obj.ty).ok_or(ContractViolation::UnknownType(obj.ty))?;
        if slot >= desc.slot_count {
            return Err(ContractViolation::SlotOutOfRange { ty: obj.ty, slot, slots: desc.slot_count }.into());
        }
        let word = self.word(obj.addr + ((slot + 1) * WORD_BYTES) as u64);
        if desc.ref_mask.contains(slot) {
            Ok(Value::Ref(ObjectRef { addr: word, ty: TypeId(self.word(word) as u16) }))
        } else {
            Ok(Value::Word(word))
        }
    }

    fn root_push(&mut self, values: &[Value]) -> Result<FrameToken, HeapError> {
        Ok(self.roots.push(values.iter().map(|v| v.raw()))?)
    }

    fn root_pop(&mut self, frame: FrameToken) -> Result<(), HeapError> {
        self.roots.pop(frame)?;
        Ok(())
    }

    fn root_set(&mut self, frame: FrameToken, index: usize, value: Value) -> Result<(), HeapError> {
        self.roots.set(frame, index, value.raw())?;
        Ok(())
    }

    fn set_global(&mut self, index: usize, value: Value) -> Result<(), HeapError> {
        Ok(self.roots.set_global(index, value.raw())?)
    }

    fn records(&self) -> &[CollectionRecord] {
        &[]
    }

    fn committed_bytes(&self) -> u64 {
        (self.pages.len() * self.config.page_bytes) as u64
    }

    fn allocations(&self) -> u64 {
        self.allocations
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objects_straddle_pages_and_read_back() {
        let mut h = EpsilonHeap::new(HeapConfig::default().with_page(64).with_nursery(64).with_reserve(1024)).unwrap();
        let leaf = h.register_type("Leaf", 2, RefMask::EMPTY).unwrap();
        let pair = h.register_type("Pair", 2, RefMask::from_slots(&[1])).unwrap();
        let a = h.construct(leaf, &[1u64.into(), 2u64.into()]).unwrap();
        let b = h.construct(pair, &[7u64.into(), a.into()]).unwrap();
        let c = h.construct(pair, &[8u64.into(), b.into()]).unwrap();
        assert_eq!(h.committed_bytes(), 128);
        assert_eq!(h.read_ref(c, 1).unwrap(), b);
        assert_eq!(h.read_ref(b, 1).unwrap(), a);
        assert_eq!(h.read_word(a, 1).unwrap(), 2);
        assert!(h.records().is_empty());
    }

    #[test]
    fn exhausting_the_reserve_is_out_of_memory() {
        let mut h = EpsilonHeap::new(HeapConfig::default().with_page(64).with_nursery(64).with_reserve(128)).unwrap();
        let leaf = h.register_type("Leaf", 3, RefMask::EMPTY).unwrap();
        for _ in 0..4 {
            h.construct(leaf, &[0u64.into(); 3]).unwrap();
        }
        assert!(matches!(h.construct(leaf, &[0u64.into(); 3]), Err(HeapError::OutOfMemory { .. })));
        assert_eq!(h.allocations(), 4);
    }
}
