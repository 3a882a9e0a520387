//! Read-only views of heap state for tests and the oracle.

use crate::config::WORD_BYTES;
use crate::header::Header;
use crate::heap::Heap;
use crate::page::PageState;

/// One allocated slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectView {
    pub addr: u64,
    pub header: Header,
    /// Payload words, `slot_count` of them.
    pub fields: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageView {
    pub index: usize,
    pub base: u64,
    pub state: PageState,
    pub class: Option<usize>,
    pub slot_bytes: usize,
    pub slots: usize,
    pub live_count: u32,
    pub bin: u32,
    /// Allocated slot indices, ascending.
    pub allocated: Vec<usize>,
    /// Slot indices on the page free-list in list order, or `None` if the
    /// list leaves the page, revisits a slot, or is not slot aligned.
    pub free_list: Option<Vec<usize>>,
}

impl Heap {
    pub fn object_at(&self, addr: u64) -> Option<ObjectView> {
        if self.validate_candidate(addr) != Some(addr) {
            return None;
        }
        let header = self.header(addr);
        let slots = self.registry.get(header.type_id()).map_or(0, |t| t.slot_count);
        let fields = (1..=slots).map(|w| self.read(addr + (w * WORD_BYTES) as u64)).collect();
        Some(ObjectView { addr, header, fields })
    }

    /// Every allocated slot in address order.
    pub fn objects(&self) -> impl Iterator<Item = ObjectView> + '_ {
        (0..self.pages.len())
            .filter(|&p| self.pages[p].state != PageState::Free)
            .flat_map(move |p| {
                let slot_bytes = self.slot_bytes_of_page(p);
                self.pages[p].alloc.ones().map(move |s| self.slot_addr(p, s, slot_bytes))
            })
            .filter_map(move |addr| self.object_at(addr))
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn page_view(&self, index: usize) -> PageView {
        let meta = &self.pages[index];
        let base = self.page_base(index);
        let slot_bytes = meta.class.map_or(0, |c| self.allocators[c].class.slot_bytes);
        let slots = meta.slots();
        let free = match meta.class {
            Some(c) if self.allocators[c].alloc_page == Some(index) => self.allocators[c].free_list,
            Some(c) if self.allocators[c].evac_page == Some(index) => self.allocators[c].evac_list,
            _ => meta.free_list,
        };
        let free_list = if meta.class.is_none() {
            Some(Vec::new())
        } else {
            let slot_in_page = |addr: u64| {
                let off = addr.wrapping_sub(base) as usize;
                (addr >= base && off < slots * slot_bytes && off.is_multiple_of(slot_bytes)).then_some(off / slot_bytes)
            };
            let mut seen = vec![false; slots];
            let mut list = Vec::new();
            let mut rest = free;
            let mut ok = true;
            while let Some(addr) = rest.pop(slot_bytes as u64, |a| slot_in_page(a).map_or(0, |_| self.read(a))) {
                match slot_in_page(addr) {
                    Some(slot) if !seen[slot] => {
                        seen[slot] = true;
                        list.push(slot);
                    }
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            ok.then_some(list)
        };
        PageView {
            index,
            base,
            state: meta.state,
            class: meta.class,
            slot_bytes,
            slots,
            live_count: meta.live_count,
            bin: meta.bin,
            allocated: meta.alloc.ones().collect(),
            free_list,
        }
    }

    /// True if `page` is filed in the utilization bin its metadata claims.
    pub fn page_is_binned(&self, page: usize) -> bool {
        let meta = &self.pages[page];
        meta.class.is_some_and(|c| self.bins[c][meta.bin as usize].contains(page))
    }

    pub fn page_is_listed_free(&self, page: usize) -> bool {
        self.free_pages.contains(page)
    }

    /// Number of pages filed in any bin.
    pub fn binned_pages(&self) -> usize {
        self.bins.iter().flatten().map(|b| b.len()).sum()
    }

    pub fn worklist(&self) -> impl ExactSizeIterator<Item = u64> + '_ {
        self.worklist.iter().copied()
    }

    /// Canonical root addresses found by the previous collection, ascending.
    pub fn root_snapshot(&self) -> &[u64] {
        &self.prev_snapshot
    }

    pub fn roots(&self) -> &crate::roots::RootRegion {
        &self.roots
    }

    /// Number of objects allocated since the last collection that still hold their slot.
    pub fn young_count(&self) -> usize {
        self.pages.iter().map(|p| p.young.count()).sum()
    }

    pub fn type_mask(&self, ty: crate::types::TypeId) -> crate::types::RefMask {
        crate::types::RefMask(self.type_mask.get(ty.index()).copied().unwrap_or(0))
    }
}
