//! The collection cycle: mark roots, mark young, promote or evacuate
//! survivors, sweep the nursery, diff root snapshots, process decrements.
//!
//! Reference counts record heap in-edges only. Root liveness is carried by
//! the ROOTREF header flag, maintained by diffing address-sorted snapshots of
//! the conservatively scanned roots between consecutive collections.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::WORD_BYTES;
use crate::events::HeapEvent;
use crate::header::Header;
use crate::heap::Heap;
use crate::page::{FreeList, PageState};

/// Statistics for one collection.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionRecord {
    pub index: u64,
    pub pause_ns: u64,
    pub work_units: u64,
    pub marked: u64,
    pub evacuated: u64,
    pub promoted_in_place: u64,
    /// Dead young objects reclaimed by the sweep.
    pub reclaimed: u64,
    /// Old objects released by the decrement walk.
    pub released: u64,
    pub deferred_backlog: u64,
    pub committed_bytes: u64,
    pub survivor_bytes: u64,
    /// Bytes allocated since the previous collection.
    pub nursery_bytes: u64,
    /// Objects allocated since the previous collection (N).
    pub allocations: u64,
    /// Release budget, `ceil(factor * N)`.
    pub budget: u64,
    /// Root words scanned.
    pub root_words: u64,
}

/// Outcome of mark_roots: canonical candidates split by age, each ascending.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct RootCandidates {
    pub young: Vec<u64>,
    pub old: Vec<u64>,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct PromotionSummary {
    pub evacuated: u64,
    pub promoted_in_place: u64,
    pub survivor_bytes: u64,
    /// Rooted objects promoted without moving, ascending.
    pub rooted_in_place: Vec<u64>,
}

/// Coefficients of the per-collection work bound
/// `c_nursery * nursery_words + c_roots * root_words + c_budget * budget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkBound {
    pub c_nursery: u64,
    pub c_roots: u64,
    pub c_budget: u64,
}

impl WorkBound {
    /// Per nursery word: mark, copy, fixup, increment, sweep (5) plus one for
    /// the header word. Per root word: scan plus a rootref set now and a
    /// rootref clear next time. Per release: dequeue, release, and one
    /// decrement per reference slot.
    pub fn for_heap(heap: &Heap) -> Self {
        Self { c_nursery: 6, c_roots: 3, c_budget: 2 + u64::from(heap.registry.max_ref_slots()) }
    }

    /// Bound for `record`, taking the root words of this and the previous collection.
    pub fn limit(&self, heap: &Heap, record: &CollectionRecord, prev_root_words: u64) -> u64 {
        let page = heap.config.page_bytes as u64;
        let nursery = heap.config.nursery_threshold_bytes as u64 + page * heap.allocators.len() as u64;
        self.c_nursery * (nursery / WORD_BYTES as u64)
            + self.c_roots * (record.root_words + prev_root_words)
            + self.c_budget * record.budget
    }
}

impl Heap {
    /// Runs a full collection inline.
    pub fn collect(&mut self) -> CollectionRecord {
        assert!(!self.collecting, "re-entrant collection");
        self.collecting = true;
        self.freeze_registry();
        let start = Instant::now();
        let work_start = self.work;
        let index = self.records.len() as u64;
        self.emit(|| HeapEvent::CollectionStart { index });

        let allocations = self.allocs_since_gc();
        let nursery_bytes = self.bytes_since_gc();
        let budget = self.config.decrement_budget(allocations);
        for alloc in &mut self.allocators {
            alloc.free_list = FreeList::default();
            alloc.alloc_page = None;
        }

        let root_words = self.roots.scan_len() as u64;
        let roots = self.mark_roots();
        log::trace!("gc {index}: mark_roots young={} old={}", roots.young.len(), roots.old.len());
        let order = self.mark_heap(&roots.young);
        log::trace!("gc {index}: mark_heap marked={}", order.len());
        let promotion = self.process_marked_young(&order, &roots.young);
        log::trace!(
            "gc {index}: process_marked_young evacuated={} in_place={}",
            promotion.evacuated,
            promotion.promoted_in_place
        );
        let reclaimed = self.sweep_nursery(promotion.evacuated);
        log::trace!("gc {index}: sweep reclaimed={reclaimed}");
        let enqueued = self.compute_dead_roots(&roots.old, &promotion.rooted_in_place);
        log::trace!("gc {index}: dead roots enqueued={enqueued}");
        let released = self.process_decrements(budget);
        log::trace!("gc {index}: decrements released={released} backlog={}", self.worklist.len());

        let record = CollectionRecord {
            index,
            pause_ns: start.elapsed().as_nanos() as u64,
            work_units: self.work - work_start,
            marked: order.len() as u64,
            evacuated: promotion.evacuated,
            promoted_in_place: promotion.promoted_in_place,
            reclaimed,
            released,
            deferred_backlog: self.worklist.len() as u64,
            committed_bytes: self.committed_bytes(),
            survivor_bytes: promotion.survivor_bytes,
            nursery_bytes,
            allocations,
            budget,
            root_words,
        };
        log::debug!("gc {index}: {record:?}");
        self.records.push(record.clone());
        self.collecting = false;
        let end = record.clone();
        self.emit(move || HeapEvent::CollectionEnd { record: end });
        if let Some(mut observer) = self.observer.take() {
            let events = self.take_events();
            observer.on_boundary(self, events);
            self.observer = Some(observer);
        }
        record
    }

    pub fn records(&self) -> &[CollectionRecord] {
        &self.records
    }

    /// Runs every root word through `validate_candidate`; deduplicates and
    /// splits the accepted canonical addresses by age.
    pub(crate) fn mark_roots(&mut self) -> RootCandidates {
        let mut found: Vec<u64> = self.roots.scan().filter_map(|w| self.validate_candidate(w)).collect();
        self.work += self.roots.scan_len() as u64;
        found.sort_unstable();
        found.dedup();
        let (young, old) = found.into_iter().partition(|&a| self.is_young(a));
        RootCandidates { young, old }
    }

    /// Marks young objects reachable from `young_roots` through young-to-young
    /// edges and returns them children-first. Old objects are never visited.
    pub(crate) fn mark_heap(&mut self, young_roots: &[u64]) -> Vec<u64> {
        let mut order = Vec::new();
        let mut stack: Vec<(u64, u64)> = Vec::new();
        for &root in young_roots {
            if self.header(root).is_marked() {
                continue;
            }
            self.mark(root);
            stack.push((root, self.ref_mask_of(root)));
            while let Some(top) = stack.last_mut() {
                if top.1 == 0 {
                    order.push(top.0);
                    stack.pop();
                    continue;
                }
                let slot = top.1.trailing_zeros() as u64;
                top.1 &= top.1 - 1;
                let child = self.read(top.0 + (slot + 1) * WORD_BYTES as u64);
                if self.is_young(child) && !self.header(child).is_marked() {
                    self.mark(child);
                    stack.push((child, self.ref_mask_of(child)));
                }
            }
        }
        order
    }

    fn mark(&mut self, addr: u64) {
        let h = self.header(addr);
        self.set_header(addr, h.set_marked(true));
        self.work += 1;
    }

    #[inline]
    fn ref_mask_of(&self, addr: u64) -> u64 {
        self.type_mask[self.header(addr).type_id().index()]
    }

    /// Promotes every marked young object, children before parents. Rooted
    /// objects are converted in place; the rest are copied to an evacuation
    /// page and leave a forwarding husk. Every reference slot of a promoted
    /// object is forwarded and its target's count incremented.
    pub(crate) fn process_marked_young(&mut self, order: &[u64], young_roots: &[u64]) -> PromotionSummary {
        let mut summary = PromotionSummary::default();
        let mut evac_pages = Vec::new();
        self.kept.clear();
        for &obj in order {
            let h = self.header(obj);
            let ty = h.type_id();
            let class = self.type_class[ty.index()];
            let slot_bytes = self.allocators[class].class.slot_bytes;
            let rooted = young_roots.binary_search(&obj).is_ok();
            let target = if rooted {
                self.set_header(obj, h.set_old(true).set_rootref(true));
                summary.promoted_in_place += 1;
                summary.rooted_in_place.push(obj);
                self.kept.push(obj);
                obj
            } else if let Some(copy) = self.evac_alloc(class, &mut evac_pages) {
                let payload = slot_bytes / WORD_BYTES - 1;
                for w in 1..=payload as u64 {
                    let word = self.read(obj + w * WORD_BYTES as u64);
                    self.write(copy + w * WORD_BYTES as u64, word);
                }
                self.work += payload as u64;
                self.set_header(copy, Header::fresh(ty).set_old(true));
                self.set_header(obj, h.set_forwarded(true));
                self.write(obj + WORD_BYTES as u64, copy);
                summary.evacuated += 1;
                self.emit(|| HeapEvent::Evacuate { from: obj, to: copy });
                copy
            } else {
                // no page to evacuate into: keep it where it is
                self.set_header(obj, h.set_old(true));
                summary.promoted_in_place += 1;
                self.kept.push(obj);
                obj
            };
            summary.survivor_bytes += slot_bytes as u64;

            let mut mask = self.type_mask[ty.index()];
            while mask != 0 {
                let slot = mask.trailing_zeros() as u64;
                mask &= mask - 1;
                let field = target + (slot + 1) * WORD_BYTES as u64;
                let child = self.read(field);
                let child = if self.header(child).is_forwarded() {
                    let moved = self.read(child + WORD_BYTES as u64);
                    self.write(field, moved);
                    self.work += 1;
                    moved
                } else {
                    child
                };
                self.increment(child);
            }
        }
        summary.rooted_in_place.sort_unstable();
        for page in evac_pages {
            let class = self.pages[page].class.expect("formatted page");
            if self.allocators[class].evac_page == Some(page) {
                let alloc = &mut self.allocators[class];
                alloc.evac_page = None;
                self.pages[page].free_list = std::mem::take(&mut alloc.evac_list);
            }
            self.file_page(page, false);
        }
        summary
    }

    fn evac_alloc(&mut self, class: usize, evac_pages: &mut Vec<usize>) -> Option<u64> {
        loop {
            let slot_bytes = self.allocators[class].class.slot_bytes as u64;
            let mut list = self.allocators[class].evac_list;
            if let Some(head) = list.pop(slot_bytes, |a| self.read(a)) {
                self.allocators[class].evac_list = list;
                let (page, slot) = self.locate(head);
                debug_assert_eq!(self.pages[page].state, PageState::Evacuation);
                self.pages[page].alloc.set(slot);
                return Some(head);
            }
            if let Some(full) = self.allocators[class].evac_page.take() {
                self.pages[full].free_list = FreeList::default();
            }
            let page = self.acquire_page(class)?;
            let meta = &mut self.pages[page];
            meta.state = PageState::Evacuation;
            let list = std::mem::take(&mut meta.free_list);
            evac_pages.push(page);
            let alloc = &mut self.allocators[class];
            alloc.evac_page = Some(page);
            alloc.evac_list = list;
        }
    }

    fn increment(&mut self, addr: u64) {
        self.work += 1;
        self.emit(|| HeapEvent::Touch { addr });
        if self.faults.skip_increments > 0 {
            self.faults.skip_increments -= 1;
            return;
        }
        let h = self.header(addr);
        let rc = h.rc().checked_add(1).expect("reference count overflow");
        self.set_header(addr, h.with_rc(rc));
    }

    /// Reclaims unmarked young slots and forwarded husks on every nursery
    /// page, clears marks on survivors, rebuilds free-lists, and refiles each
    /// page as Free, OldPartial or OldFull. Returns the dead young objects reclaimed.
    pub(crate) fn sweep_nursery(&mut self, husks: u64) -> u64 {
        // survivors left in place keep their slot; everything else young goes
        for addr in std::mem::take(&mut self.kept) {
            self.work += 1;
            let h = self.header(addr);
            self.set_header(addr, h.set_marked(false));
            let (page, slot) = self.locate(addr);
            self.pages[page].young.clear(slot);
        }
        let mut dead = 0;
        let pages = std::mem::take(&mut self.nursery_pages);
        for &page in &pages {
            let mut young = std::mem::take(&mut self.pages[page].young);
            let count = young.count() as u64;
            self.work += count;
            dead += count;
            if self.events.is_some() {
                let slot_bytes = self.slot_bytes_of_page(page);
                for slot in young.ones() {
                    let addr = self.slot_addr(page, slot, slot_bytes);
                    if !self.header(addr).is_forwarded() {
                        self.emit(|| HeapEvent::Reclaim { addr });
                    }
                }
            }
            let whole = young == self.pages[page].alloc;
            if !whole {
                self.pages[page].alloc.remove_all(&young);
            }
            young.clear_all();
            self.pages[page].young = young;
            if whole {
                // nothing old or kept in place: the page is as good as fresh
                self.free_whole_page(page);
            } else {
                self.file_page(page, true);
            }
        }
        self.nursery_pages = pages;
        self.nursery_pages.clear();
        for alloc in &mut self.allocators {
            alloc.free_list = FreeList::default();
            alloc.alloc_page = None;
            alloc.allocs_since_gc = 0;
            alloc.bytes_since_gc = 0;
        }
        dead - husks
    }

    /// Two-pointer walk over the previous and current address-sorted root
    /// snapshots. Dropped roots lose ROOTREF and, at count zero, join the
    /// decrement worklist; new roots gain ROOTREF. Returns how many were enqueued.
    pub(crate) fn compute_dead_roots(&mut self, old_roots: &[u64], rooted_in_place: &[u64]) -> u64 {
        let mut current = Vec::with_capacity(old_roots.len() + rooted_in_place.len());
        let (mut i, mut j) = (0, 0);
        while i < old_roots.len() || j < rooted_in_place.len() {
            let take_old = j == rooted_in_place.len() || (i < old_roots.len() && old_roots[i] < rooted_in_place[j]);
            if take_old {
                current.push(old_roots[i]);
                i += 1;
            } else {
                current.push(rooted_in_place[j]);
                j += 1;
            }
        }
        let previous = std::mem::take(&mut self.prev_snapshot);
        let mut enqueued = 0;
        let (mut p, mut c) = (0, 0);
        while p < previous.len() || c < current.len() {
            if c == current.len() || (p < previous.len() && previous[p] < current[c]) {
                let addr = previous[p];
                p += 1;
                self.work += 1;
                self.emit(|| HeapEvent::Touch { addr });
                let mut h = self.header(addr).set_rootref(false);
                if h.rc() == 0 && !h.is_queued() {
                    h = h.set_queued(true);
                    self.worklist.push_back(addr);
                    enqueued += 1;
                }
                self.set_header(addr, h);
            } else if p == previous.len() || current[c] < previous[p] {
                let addr = current[c];
                c += 1;
                self.work += 1;
                self.emit(|| HeapEvent::Touch { addr });
                let h = self.header(addr);
                self.set_header(addr, h.set_rootref(true));
            } else {
                p += 1;
                c += 1;
            }
        }
        self.prev_snapshot = current;
        enqueued
    }

    /// Releases dead old objects from the FIFO worklist until it is empty or
    /// `budget` objects have been released. Leftovers carry over.
    pub(crate) fn process_decrements(&mut self, budget: u64) -> u64 {
        let mut released = 0;
        let mut touched_pages = Vec::new();
        while released < budget {
            let Some(addr) = self.worklist.pop_front() else { break };
            self.work += 1;
            self.emit(|| HeapEvent::Touch { addr });
            let h = self.header(addr).set_queued(false);
            self.set_header(addr, h);
            if h.rc() != 0 || h.is_rootref() {
                continue;
            }
            let mut mask = self.type_mask[h.type_id().index()];
            while mask != 0 {
                let slot = mask.trailing_zeros() as u64;
                mask &= mask - 1;
                let child = self.read(addr + (slot + 1) * WORD_BYTES as u64);
                self.work += 1;
                self.emit(|| HeapEvent::Touch { addr: child });
                let ch = self.header(child);
                let rc = ch.rc().checked_sub(1).expect("reference count underflow");
                let mut ch = ch.with_rc(rc);
                if rc == 0 && !ch.is_rootref() && !ch.is_queued() {
                    ch = ch.set_queued(true);
                    self.worklist.push_back(child);
                }
                self.set_header(child, ch);
            }
            let (page, slot) = self.locate(addr);
            let meta = &mut self.pages[page];
            debug_assert!(matches!(meta.state, PageState::OldPartial | PageState::OldFull));
            meta.alloc.clear(slot);
            let next = meta.free_list.head.unwrap_or(0);
            meta.free_list.head = Some(addr);
            meta.pending_release += 1;
            if meta.pending_release == 1 {
                touched_pages.push(page);
            }
            self.write(addr, next);
            self.work += 1;
            released += 1;
            self.emit(|| HeapEvent::Release { addr });
        }
        for page in touched_pages {
            let meta = &mut self.pages[page];
            meta.live_count -= meta.pending_release;
            debug_assert_eq!(meta.live_count as usize, meta.alloc.count());
            self.unfile_page(page);
            self.file_page(page, false);
        }
        released
    }
}
