//! Reserved address range, page lifecycle, size-class allocators and
//! conservative address validation.
//!
//! Heap memory is simulated: every page is a boxed word buffer committed on
//! first use and addressed through a fixed virtual base, so conservative
//! canonicalization is pure arithmetic on `u64` words.

use std::collections::VecDeque;

use crate::bitset::{PageSet, SlotBits};
use crate::collector::CollectionRecord;
use crate::config::{HeapConfig, WORD_BYTES};
use crate::error::{ContractViolation, HeapError};
use crate::events::{CollectionObserver, HeapEvent};
use crate::header::Header;
use crate::page::{FreeList, PageMeta, PageState};
use crate::roots::RootRegion;
use crate::types::{SizeClass, TypeId, TypeRegistry};

/// Virtual address of page 0. Chosen well above any small integer so that
/// typical non-pointer words never land in the heap.
pub const HEAP_BASE: u64 = 1 << 40;

/// Per-size-class allocation state.
#[derive(Debug, Clone)]
pub struct Allocator {
    pub class: SizeClass,
    pub free_list: FreeList,
    pub alloc_page: Option<usize>,
    pub evac_page: Option<usize>,
    pub(crate) evac_list: FreeList,
    pub allocs_since_gc: u64,
    pub bytes_since_gc: u64,
    /// `floor(2^40 / slot_bytes) + 1`, or 0 when the page is too large for
    /// the multiply to stay exact.
    recip: u64,
}

const RECIP_SHIFT: u32 = 40;

impl Allocator {
    fn new(class: SizeClass, page_bytes: usize) -> Self {
        let d = class.slot_bytes as u64;
        // exact while offset * d < 2^40; the page bound keeps offset * recip in range
        let fits = page_bytes <= 1 << 24 && (page_bytes as u64) * d < 1 << RECIP_SHIFT;
        let recip = if fits { (1 << RECIP_SHIFT) / d + 1 } else { 0 };
        Self {
            recip,
            class,
            free_list: FreeList::default(),
            alloc_page: None,
            evac_page: None,
            evac_list: FreeList::default(),
            allocs_since_gc: 0,
            bytes_since_gc: 0,
        }
    }

    /// Slot index of a byte offset within one of this class's pages.
    #[inline]
    pub(crate) fn slot_of(&self, offset: u64) -> usize {
        if self.recip != 0 {
            ((offset * self.recip) >> RECIP_SHIFT) as usize
        } else {
            (offset / self.class.slot_bytes as u64) as usize
        }
    }
}

#[derive(Debug, Default, Clone)]
pub(crate) struct Faults {
    pub skip_increments: u32,
}

pub struct Heap {
    pub(crate) config: HeapConfig,
    pub(crate) page_shift: u32,
    pub(crate) pages: Vec<PageMeta>,
    pub(crate) memory: Vec<Box<[u64]>>,
    pub(crate) free_pages: PageSet,
    /// OldPartial pages per size class, per utilization bin.
    pub(crate) bins: Vec<Vec<PageSet>>,
    pub(crate) registry: TypeRegistry,
    pub(crate) type_class: Vec<usize>,
    pub(crate) type_mask: Vec<u64>,
    pub(crate) allocators: Vec<Allocator>,
    pub(crate) nursery_pages: Vec<usize>,
    /// Marked young objects left in their nursery slot by the current collection.
    pub(crate) kept: Vec<u64>,
    pub(crate) roots: RootRegion,
    pub(crate) prev_snapshot: Vec<u64>,
    pub(crate) worklist: VecDeque<u64>,
    pub(crate) records: Vec<CollectionRecord>,
    pub(crate) work: u64,
    pub(crate) total_allocs: u64,
    pub(crate) events: Option<Vec<HeapEvent>>,
    pub(crate) observer: Option<Box<dyn CollectionObserver>>,
    pub(crate) faults: Faults,
    pub(crate) collecting: bool,
}

impl std::fmt::Debug for Heap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Heap")
            .field("committed_pages", &self.pages.len())
            .field("collections", &self.records.len())
            .field("allocations", &self.total_allocs)
            .finish_non_exhaustive()
    }
}

impl Heap {
    /// Reserves the heap range described by `config`. Nothing is committed yet.
    pub fn new(config: HeapConfig) -> Result<Self, HeapError> {
        config.validate()?;
        let roots = RootRegion::new(config.root_capacity_words, config.global_words);
        Ok(Self {
            page_shift: config.page_bytes.trailing_zeros(),
            pages: Vec::new(),
            memory: Vec::new(),
            free_pages: PageSet::default(),
            bins: Vec::new(),
            registry: TypeRegistry::new(),
            type_class: Vec::new(),
            type_mask: Vec::new(),
            allocators: Vec::new(),
            nursery_pages: Vec::new(),
            kept: Vec::new(),
            roots,
            prev_snapshot: Vec::new(),
            worklist: VecDeque::new(),
            records: Vec::new(),
            work: 0,
            total_allocs: 0,
            events: None,
            observer: None,
            faults: Faults::default(),
            collecting: false,
            config,
        })
    }

    pub fn config(&self) -> &HeapConfig {
        &self.config
    }

    /// Total pages in the reserved range.
    pub fn reserved_pages(&self) -> usize {
        self.config.page_count()
    }

    pub fn committed_pages(&self) -> usize {
        self.pages.len()
    }

    /// Records heap events for an attached oracle.
    pub fn enable_events(&mut self) {
        if self.events.is_none() {
            self.events = Some(Vec::new());
        }
    }

    pub fn take_events(&mut self) -> Vec<HeapEvent> {
        self.events.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Installs a hook run at every collection boundary. Enables events.
    pub fn set_observer(&mut self, observer: Box<dyn CollectionObserver>) {
        self.enable_events();
        self.observer = Some(observer);
    }

    pub fn take_observer(&mut self) -> Option<Box<dyn CollectionObserver>> {
        self.observer.take()
    }

    #[inline]
    pub(crate) fn emit(&mut self, event: impl FnOnce() -> HeapEvent) {
        if let Some(log) = self.events.as_mut() {
            log.push(event());
        }
    }

    pub(crate) fn freeze_registry(&mut self) {
        if self.registry.is_frozen() {
            return;
        }
        self.registry.freeze(self.config.page_bytes);
        self.type_class = self
            .registry
            .types()
            .iter()
            .map(|t| self.registry.class_of(t.id).expect("frozen").id)
            .collect();
        self.type_mask = self.registry.types().iter().map(|t| t.ref_mask.0).collect();
        self.allocators = self.registry.classes().iter().copied().map(|c| Allocator::new(c, self.config.page_bytes)).collect();
        self.bins = vec![vec![PageSet::default(); self.config.bin_count()]; self.allocators.len()];
    }

    pub fn registry_frozen(&self) -> bool {
        self.registry.is_frozen()
    }

    pub fn allocator(&self, class: usize) -> &Allocator {
        &self.allocators[class]
    }

    pub fn class_of(&self, ty: TypeId) -> Option<usize> {
        self.type_class.get(ty.index()).copied()
    }

    pub fn bytes_since_gc(&self) -> u64 {
        self.allocators.iter().map(|a| a.bytes_since_gc).sum()
    }

    pub fn allocs_since_gc(&self) -> u64 {
        self.allocators.iter().map(|a| a.allocs_since_gc).sum()
    }

    /// Cumulative logical collector work.
    pub fn work_units(&self) -> u64 {
        self.work
    }

    pub fn committed_bytes(&self) -> u64 {
        (self.pages.len() * self.config.page_bytes) as u64
    }

    // ---- address arithmetic -------------------------------------------------

    #[inline]
    pub(crate) fn page_base(&self, page: usize) -> u64 {
        HEAP_BASE + ((page as u64) << self.page_shift)
    }

    #[inline]
    pub(crate) fn page_of(&self, addr: u64) -> usize {
        ((addr - HEAP_BASE) >> self.page_shift) as usize
    }

    #[inline]
    pub(crate) fn slot_bytes_of_page(&self, page: usize) -> usize {
        self.allocators[self.pages[page].class.expect("formatted page")].class.slot_bytes
    }

    /// Page and slot index of a canonical slot address.
    #[inline]
    pub(crate) fn locate(&self, addr: u64) -> (usize, usize) {
        let page = self.page_of(addr);
        let offset = addr - self.page_base(page);
        let class = self.pages[page].class.expect("formatted page");
        (page, self.allocators[class].slot_of(offset))
    }

    #[inline]
    pub(crate) fn slot_addr(&self, page: usize, slot: usize, slot_bytes: usize) -> u64 {
        self.page_base(page) + (slot * slot_bytes) as u64
    }

    #[inline]
    pub(crate) fn read(&self, addr: u64) -> u64 {
        let off = addr - HEAP_BASE;
        let page = (off >> self.page_shift) as usize;
        let word = ((off & ((1 << self.page_shift) - 1)) / WORD_BYTES as u64) as usize;
        self.memory[page][word]
    }

    #[inline]
    pub(crate) fn write(&mut self, addr: u64, value: u64) {
        let off = addr - HEAP_BASE;
        let page = (off >> self.page_shift) as usize;
        let word = ((off & ((1 << self.page_shift) - 1)) / WORD_BYTES as u64) as usize;
        self.memory[page][word] = value;
    }

    #[inline]
    pub(crate) fn header(&self, addr: u64) -> Header {
        Header(self.read(addr))
    }

    #[inline]
    pub(crate) fn set_header(&mut self, addr: u64, h: Header) {
        self.write(addr, h.0)
    }

    /// True when `addr` is a slot handed out since the last collection.
    #[inline]
    pub(crate) fn is_young(&self, addr: u64) -> bool {
        let (page, slot) = self.locate(addr);
        self.pages[page].young.get(slot)
    }

    // ---- conservative validation --------------------------------------------

    /// Maps an arbitrary word to the base address of the allocated slot that
    /// contains it, or `None` if it does not point into a live slot.
    pub fn validate_candidate(&self, word: u64) -> Option<u64> {
        if word < HEAP_BASE {
            return None;
        }
        let page = ((word - HEAP_BASE) >> self.page_shift) as usize;
        let meta = self.pages.get(page)?;
        if meta.state == PageState::Free {
            return None;
        }
        let alloc = &self.allocators[meta.class?];
        let slot = alloc.slot_of(word - self.page_base(page));
        if !meta.alloc.get(slot) {
            return None;
        }
        Some(self.slot_addr(page, slot, alloc.class.slot_bytes))
    }

    // ---- pages ---------------------------------------------------------------

    fn commit_page(&mut self) -> Option<usize> {
        if self.pages.len() >= self.config.page_count() {
            return None;
        }
        let words = self.config.page_bytes / WORD_BYTES;
        self.memory.push(vec![0u64; words].into_boxed_slice());
        self.pages.push(PageMeta::free());
        Some(self.pages.len() - 1)
    }

    fn format_page(&mut self, page: usize, class: usize) {
        let slots = self.allocators[class].class.slots_per_page;
        let meta = &mut self.pages[page];
        if meta.class != Some(class) || meta.slots() != slots {
            meta.alloc = SlotBits::new(slots);
            meta.young = SlotBits::new(slots);
        }
        meta.class = Some(class);
        meta.live_count = 0;
        meta.bin = 0;
        meta.pending_release = 0;
    }

    /// Rebuilds the page's free-list in ascending address order: the holes
    /// below the highest allocated slot are threaded, the rest is left as the
    /// unthreaded run.
    pub(crate) fn thread_freelist(&mut self, page: usize) {
        let slot_bytes = self.slot_bytes_of_page(page);
        let slot_words = slot_bytes / WORD_BYTES;
        let base = self.page_base(page);
        let meta = &mut self.pages[page];
        let mem = &mut self.memory[page];
        let run = meta.alloc.last_one().map_or(0, |s| s + 1);
        let mut head = None;
        let mut last: Option<usize> = None;
        for slot in meta.alloc.zeros().take_while(|&s| s < run) {
            let addr = base + (slot * slot_bytes) as u64;
            match last {
                Some(prev) => mem[prev * slot_words] = addr,
                None => head = Some(addr),
            }
            last = Some(slot);
        }
        if let Some(prev) = last {
            mem[prev * slot_words] = 0;
        }
        meta.free_list = FreeList {
            head,
            fresh: base + (run * slot_bytes) as u64,
            end: base + (meta.slots() * slot_bytes) as u64,
        };
    }

    /// Picks a page for `class` to allocate or evacuate into: the emptiest
    /// partially filled old page of that class, else a Free page (committing
    /// one if needed). The page's free-list is rethreaded in address order.
    pub fn acquire_page(&mut self, class: usize) -> Option<usize> {
        let from_bin = self.bins[class].iter_mut().find_map(|bin| bin.pop_first());
        let page = match from_bin {
            Some(page) => page,
            None => {
                let page = match self.free_pages.pop_first() {
                    Some(page) => page,
                    None => self.commit_page()?,
                };
                self.format_page(page, class);
                page
            }
        };
        self.thread_freelist(page);
        Some(page)
    }

    /// Files a page that is no longer owned by an allocator according to its
    /// allocation bitmap: Free, OldFull, or OldPartial in its utilization bin.
    pub(crate) fn file_page(&mut self, page: usize, rethread: bool) {
        let class = self.pages[page].class.expect("formatted page");
        let live = self.pages[page].alloc.count() as u32;
        let slots = self.pages[page].slots() as u32;
        if rethread || live == 0 {
            self.thread_freelist(page);
        }
        let bin = if live == 0 { 0 } else { self.config.bin_for(live, slots) };
        let meta = &mut self.pages[page];
        meta.live_count = live;
        meta.pending_release = 0;
        meta.bin = bin;
        if live == 0 {
            meta.state = PageState::Free;
            self.free_pages.insert(page);
        } else if live == slots {
            meta.state = PageState::OldFull;
        } else {
            meta.state = PageState::OldPartial;
            self.bins[class][bin as usize].insert(page);
        }
    }

    /// Files a page whose every slot is garbage as Free without walking its bitmap.
    pub(crate) fn free_whole_page(&mut self, page: usize) {
        let slot_bytes = self.slot_bytes_of_page(page);
        let base = self.page_base(page);
        let meta = &mut self.pages[page];
        meta.alloc.clear_all();
        meta.free_list = FreeList { head: None, fresh: base, end: base + (meta.slots() * slot_bytes) as u64 };
        meta.live_count = 0;
        meta.pending_release = 0;
        meta.bin = 0;
        meta.state = PageState::Free;
        self.free_pages.insert(page);
    }

    /// Removes an OldPartial page from its bin.
    pub(crate) fn unfile_page(&mut self, page: usize) {
        let meta = &self.pages[page];
        if meta.state == PageState::OldPartial {
            let class = meta.class.expect("formatted page");
            self.bins[class][meta.bin as usize].remove(page);
        }
    }

    // ---- allocation ------------------------------------------------------------

    /// Pops the head of the class free-list. `None` is a miss.
    #[inline]
    pub fn alloc_fast(&mut self, class: usize, ty: TypeId) -> Option<u64> {
        let slot_bytes = self.allocators[class].class.slot_bytes;
        let mut list = self.allocators[class].free_list;
        let head = list.pop(slot_bytes as u64, |a| self.read(a))?;
        let alloc = &mut self.allocators[class];
        alloc.free_list = list;
        alloc.allocs_since_gc += 1;
        alloc.bytes_since_gc += slot_bytes as u64;
        let (page, slot) = self.locate(head);
        let meta = &mut self.pages[page];
        debug_assert_eq!(meta.state, PageState::NurseryActive);
        debug_assert!(!meta.alloc.get(slot));
        meta.alloc.set(slot);
        meta.young.set(slot);
        self.set_header(head, Header::fresh(ty));
        self.total_allocs += 1;
        Some(head)
    }

    /// Refills the class allocator, collecting first when the nursery
    /// threshold has been reached.
    pub fn alloc_slow(&mut self, class: usize, ty: TypeId) -> Result<u64, HeapError> {
        let mut collected = false;
        loop {
            if !collected && self.bytes_since_gc() >= self.config.nursery_threshold_bytes as u64 {
                self.collect();
                collected = true;
            }
            if let Some(addr) = self.alloc_fast(class, ty) {
                return Ok(addr);
            }
            self.retire_alloc_page(class);
            match self.acquire_page(class) {
                Some(page) => {
                    let meta = &mut self.pages[page];
                    meta.state = PageState::NurseryActive;
                    let list = std::mem::take(&mut meta.free_list);
                    self.nursery_pages.push(page);
                    let alloc = &mut self.allocators[class];
                    alloc.free_list = list;
                    alloc.alloc_page = Some(page);
                }
                None if !collected => {
                    self.collect();
                    collected = true;
                }
                None => {
                    return Err(HeapError::OutOfMemory {
                        requested: self.allocators[class].class.slot_bytes,
                        committed: self.committed_bytes(),
                        reserve: self.config.heap_reserve_bytes as u64,
                    })
                }
            }
        }
    }

    pub(crate) fn alloc(&mut self, ty: TypeId) -> Result<u64, HeapError> {
        let class = self.type_class[ty.index()];
        match self.alloc_fast(class, ty) {
            Some(addr) => Ok(addr),
            None => self.alloc_slow(class, ty),
        }
    }

    fn retire_alloc_page(&mut self, class: usize) {
        let alloc = &mut self.allocators[class];
        if let Some(page) = alloc.alloc_page.take() {
            let list = std::mem::take(&mut alloc.free_list);
            let meta = &mut self.pages[page];
            meta.free_list = list;
            meta.state = if list.is_empty() { PageState::NurseryFull } else { PageState::NurseryActive };
        }
    }

    // ---- testing hooks ---------------------------------------------------------

    /// Skips the next `n` reference-count increments. Used to check that the
    /// oracle notices missing increments.
    #[doc(hidden)]
    pub fn inject_skipped_increments(&mut self, n: u32) {
        self.faults.skip_increments = n;
    }

    /// Overwrites a payload word in place, bypassing immutability. Used to
    /// check that the oracle notices illegal edges.
    #[doc(hidden)]
    pub fn corrupt_field(&mut self, addr: u64, slot: usize, word: u64) {
        self.write(addr + ((slot + 1) * WORD_BYTES) as u64, word);
    }

    pub(crate) fn check_ref(&self, addr: u64, ty: Option<TypeId>) -> Result<Header, ContractViolation> {
        if self.validate_candidate(addr) != Some(addr) {
            return Err(ContractViolation::StaleRef { addr });
        }
        let h = self.header(addr);
        if h.is_forwarded() || ty.is_some_and(|t| t != h.type_id()) {
            return Err(ContractViolation::StaleRef { addr });
        }
        Ok(h)
    }
}
