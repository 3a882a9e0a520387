//! Closed-world type registry and the size classes derived from it.

use serde::{Deserialize, Serialize};

use crate::config::WORD_BYTES;
use crate::error::ContractViolation;

pub const MAX_SLOTS: usize = 64;

/// Dense type identifier, stamped into every object header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TypeId(pub u16);

impl TypeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Which slots of a type hold heap references.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RefMask(pub u64);

impl RefMask {
    pub const EMPTY: RefMask = RefMask(0);

    pub fn from_slots(slots: &[usize]) -> Self {
        RefMask(slots.iter().fold(0u64, |m, &s| if s < 64 { m | (1 << s) } else { m }))
    }

    pub fn contains(self, slot: usize) -> bool {
        slot < 64 && self.0 & (1 << slot) != 0
    }

    /// Slot indices holding references, ascending.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let slot = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(slot)
            }
        })
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDescriptor {
    pub id: TypeId,
    pub name: String,
    pub slot_count: usize,
    pub ref_mask: RefMask,
}

impl TypeDescriptor {
    /// Header word plus payload words. Zero-field objects still get one payload
    /// word so an evacuated husk has somewhere to keep its forwarding address.
    pub fn slot_bytes(&self) -> usize {
        WORD_BYTES * (1 + self.slot_count.max(1))
    }
}

/// One allocator's worth of uniformly sized slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeClass {
    pub id: usize,
    pub slot_bytes: usize,
    pub slots_per_page: usize,
}

/// Append-only until frozen; frozen before the first allocation.
#[derive(Debug, Clone, Default)]
pub struct TypeRegistry {
    types: Vec<TypeDescriptor>,
    classes: Vec<SizeClass>,
    class_of: Vec<usize>,
    frozen: bool,
}

impl TypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        slot_count: usize,
        ref_mask: RefMask,
        page_bytes: usize,
    ) -> Result<TypeId, ContractViolation> {
        if self.frozen {
            return Err(ContractViolation::RegistryFrozen);
        }
        if self.types.len() > u16::MAX as usize {
            return Err(ContractViolation::TooManyTypes);
        }
        if slot_count > MAX_SLOTS {
            return Err(ContractViolation::TooManySlots { name: name.to_owned(), slots: slot_count });
        }
        if let Some(bit) = ref_mask.iter().find(|&b| b >= slot_count) {
            return Err(ContractViolation::RefMaskOutOfRange {
                name: name.to_owned(),
                bit,
                slots: slot_count,
            });
        }
        let desc = TypeDescriptor {
            id: TypeId(self.types.len() as u16),
            name: name.to_owned(),
            slot_count,
            ref_mask,
        };
        if desc.slot_bytes() > page_bytes {
            return Err(ContractViolation::ObjectTooLarge {
                name: name.to_owned(),
                slot_bytes: desc.slot_bytes(),
                page_bytes,
            });
        }
        let id = desc.id;
        self.types.push(desc);
        Ok(id)
    }

    /// Fixes the type set and derives one size class per distinct object size.
    /// Idempotent.
    pub fn freeze(&mut self, page_bytes: usize) {
        if self.frozen {
            return;
        }
        let mut sizes: Vec<usize> = self.types.iter().map(TypeDescriptor::slot_bytes).collect();
        sizes.sort_unstable();
        sizes.dedup();
        self.classes = sizes
            .iter()
            .enumerate()
            .map(|(id, &slot_bytes)| SizeClass { id, slot_bytes, slots_per_page: page_bytes / slot_bytes })
            .collect();
        self.class_of = self
            .types
            .iter()
            .map(|t| sizes.binary_search(&t.slot_bytes()).expect("size recorded above"))
            .collect();
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn get(&self, id: TypeId) -> Option<&TypeDescriptor> {
        self.types.get(id.index())
    }

    pub fn types(&self) -> &[TypeDescriptor] {
        &self.types
    }

    pub fn classes(&self) -> &[SizeClass] {
        &self.classes
    }

    pub fn class_of(&self, id: TypeId) -> Option<&SizeClass> {
        self.class_of.get(id.index()).map(|&c| &self.classes[c])
    }

    pub fn max_ref_slots(&self) -> u32 {
        self.types.iter().map(|t| t.ref_mask.count()).max().unwrap_or(0)
    }
}
