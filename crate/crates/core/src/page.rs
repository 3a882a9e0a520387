//! Side-table page metadata.

use serde::{Deserialize, Serialize};

use crate::bitset::SlotBits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PageState {
    Free,
    NurseryActive,
    NurseryFull,
    Evacuation,
    OldPartial,
    OldFull,
}

impl PageState {
    pub fn is_nursery(self) -> bool {
        matches!(self, PageState::NurseryActive | PageState::NurseryFull)
    }
}

/// Free slots of one page: a threaded list, then the unthreaded run
/// `fresh..end` whose slots are handed out in address order. Every slot at or
/// above `fresh` is free, so threaded entries always lie below it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FreeList {
    pub head: Option<u64>,
    pub fresh: u64,
    pub end: u64,
}

impl FreeList {
    pub fn is_empty(&self) -> bool {
        self.head.is_none() && self.fresh >= self.end
    }

    /// Takes the first free slot. `read` loads the link stored in a threaded slot.
    #[inline]
    pub fn pop(&mut self, slot_bytes: u64, read: impl FnOnce(u64) -> u64) -> Option<u64> {
        if let Some(head) = self.head {
            let next = read(head);
            self.head = (next != 0).then_some(next);
            Some(head)
        } else if self.fresh < self.end {
            let addr = self.fresh;
            self.fresh += slot_bytes;
            Some(addr)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct PageMeta {
    pub state: PageState,
    pub class: Option<usize>,
    /// This page's free-list while the page is not owned by an allocator.
    pub free_list: FreeList,
    pub alloc: SlotBits,
    /// Slots handed out since the last collection.
    pub young: SlotBits,
    pub live_count: u32,
    pub bin: u32,
    /// Releases not yet folded into `live_count`.
    pub pending_release: u32,
}

impl PageMeta {
    pub fn free() -> Self {
        Self {
            state: PageState::Free,
            class: None,
            free_list: FreeList::default(),
            alloc: SlotBits::default(),
            young: SlotBits::default(),
            live_count: 0,
            bin: 0,
            pending_release: 0,
        }
    }

    pub fn slots(&self) -> usize {
        self.alloc.len()
    }
}
