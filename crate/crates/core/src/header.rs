//! The single metadata word at the front of every object.
//!
//! ```text
//!  63      53 52   51   50   49   48 47        32 31               0
//! +----------+----+----+----+----+----+-----------+-----------------+
//! | reserved | Q  | F  | R  | O  | M  |  type id  | reference count |
//! +----------+----+----+----+----+----+-----------+-----------------+
//! ```
//! M = marked, O = old, R = root-referenced, F = forwarded, Q = queued for decrement.

use crate::types::TypeId;

const RC_MASK: u64 = 0xffff_ffff;
const TYPE_SHIFT: u32 = 32;
const MARK: u64 = 1 << 48;
const OLD: u64 = 1 << 49;
const ROOTREF: u64 = 1 << 50;
const FORWARDED: u64 = 1 << 51;
const QUEUED: u64 = 1 << 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Header(pub u64);

impl Header {
    /// Young, unmarked, rc = 0.
    pub fn fresh(ty: TypeId) -> Self {
        Header(u64::from(ty.0) << TYPE_SHIFT)
    }

    pub fn rc(self) -> u32 {
        (self.0 & RC_MASK) as u32
    }

    pub fn type_id(self) -> TypeId {
        TypeId((self.0 >> TYPE_SHIFT) as u16)
    }

    pub fn with_rc(self, rc: u32) -> Self {
        Header((self.0 & !RC_MASK) | u64::from(rc))
    }

    pub fn is_marked(self) -> bool {
        self.0 & MARK != 0
    }

    pub fn is_old(self) -> bool {
        self.0 & OLD != 0
    }

    pub fn is_rootref(self) -> bool {
        self.0 & ROOTREF != 0
    }

    pub fn is_forwarded(self) -> bool {
        self.0 & FORWARDED != 0
    }

    pub fn is_queued(self) -> bool {
        self.0 & QUEUED != 0
    }

    pub fn set_marked(self, on: bool) -> Self {
        self.flag(MARK, on)
    }

    pub fn set_old(self, on: bool) -> Self {
        self.flag(OLD, on)
    }

    pub fn set_rootref(self, on: bool) -> Self {
        self.flag(ROOTREF, on)
    }

    pub fn set_forwarded(self, on: bool) -> Self {
        self.flag(FORWARDED, on)
    }

    pub fn set_queued(self, on: bool) -> Self {
        self.flag(QUEUED, on)
    }

    fn flag(self, bit: u64, on: bool) -> Self {
        if on {
            Header(self.0 | bit)
        } else {
            Header(self.0 & !bit)
        }
    }
}
