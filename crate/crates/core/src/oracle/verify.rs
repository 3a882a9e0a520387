//! Boundary checks run against the shadow graph after every collection.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::shadow::{NodeId, ShadowField, ShadowGraph};
use crate::collector::{CollectionRecord, WorkBound};
use crate::events::{CollectionObserver, HeapEvent};
use crate::heap::Heap;
use crate::mutator::Mutator;
use crate::page::PageState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Event stream consistent with the shadow graph.
    Shadow,
    /// The two reachability traversals agree.
    Traversal,
    Safety,
    BoundedLiveness,
    NoOldToYoung,
    Effectiveness,
    RcExact,
    RootRef,
    Layout,
    MemoryBound,
    PauseBound,
    Fringe,
    PageDuality,
    NurseryEmpty,
    RetentionGap,
    RecordConsistency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: Check,
    /// Collection index, or `None` for checks run between collections.
    pub collection: Option<u64>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub evaluated: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub collections: u64,
    pub nodes: u64,
    pub released: u64,
    pub checks: BTreeMap<Check, Tally>,
    /// First violations found, capped.
    pub violations: Vec<Violation>,
}

const MAX_VIOLATIONS: usize = 64;

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.values().all(|t| t.failed == 0)
    }

    pub fn failed(&self, check: Check) -> u64 {
        self.checks.get(&check).map_or(0, |t| t.failed)
    }

    pub fn evaluated(&self, check: Check) -> u64 {
        self.checks.get(&check).map_or(0, |t| t.evaluated)
    }

    fn record(&mut self, check: Check, collection: Option<u64>, failures: Vec<String>) {
        let tally = self.checks.entry(check).or_default();
        tally.evaluated += 1;
        if !failures.is_empty() {
            tally.failed += 1;
        }
        for detail in failures {
            if self.violations.len() < MAX_VIOLATIONS {
                self.violations.push(Violation { check, collection, detail });
            }
        }
    }
}

#[derive(Debug, Default)]
struct Epoch {
    touched: Vec<NodeId>,
    released: Vec<NodeId>,
    reclaimed: Vec<NodeId>,
    evacuated: u64,
    constructs: u64,
    faults: Vec<String>,
    safety: Vec<String>,
}

#[derive(Debug, Default)]
struct State {
    shadow: Option<ShadowGraph>,
    report: Report,
    epoch: Epoch,
    /// Conservative reachability at the start of the running collection.
    live_at_start: Vec<bool>,
    roots_at_start: Vec<NodeId>,
    prev_roots: Vec<NodeId>,
    prev_worklist: Vec<u64>,
    prev_root_words: u64,
    /// Cumulative budgets: `budget_sums[k]` covers collections `0..=k`.
    budget_sums: Vec<u64>,
    /// Open liveness obligations `(k, debt_k)`.
    obligations: Vec<(u64, u64)>,
    dead_since: Vec<Option<u64>>,
}

/// Collection observer that mirrors the heap in a shadow graph and checks it
/// at every boundary. Clones share state, so one clone can be installed on the
/// heap while another reads the report.
#[derive(Debug, Clone, Default)]
pub struct Verifier {
    state: Rc<RefCell<State>>,
}

impl Verifier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs a clone of this verifier on `heap`.
    pub fn attach(&self, heap: &mut Heap) {
        heap.set_observer(Box::new(self.clone()));
    }

    pub fn report(&self) -> Report {
        let state = self.state.borrow();
        let mut report = state.report.clone();
        if let Some(shadow) = &state.shadow {
            report.nodes = shadow.nodes().len() as u64;
            report.released = shadow.nodes().iter().filter(|n| n.released).count() as u64;
        }
        report
    }

    /// Exact reachable node ids from the precise roots.
    pub fn reachable_set(&self) -> Vec<NodeId> {
        let state = self.state.borrow();
        state.shadow.as_ref().map(|s| s.reachable_set().into_iter().collect()).unwrap_or_default()
    }

    pub fn with_shadow<R>(&self, f: impl FnOnce(&ShadowGraph) -> R) -> Option<R> {
        self.state.borrow().shadow.as_ref().map(f)
    }

    /// Drains pending events and runs the checks that hold between collections.
    pub fn check_now(&self, heap: &mut Heap) {
        let events = heap.take_events();
        let mut state = self.state.borrow_mut();
        state.ingest(heap, events);
        state.check_between(heap);
    }
}

impl CollectionObserver for Verifier {
    fn on_boundary(&mut self, heap: &Heap, events: Vec<HeapEvent>) {
        self.state.borrow_mut().ingest(heap, events);
    }
}

/// Runs every boundary check once against the current heap and shadow.
pub fn check_invariants(verifier: &Verifier, heap: &mut Heap) -> Report {
    verifier.check_now(heap);
    verifier.report()
}

impl State {
    fn shadow_for(&mut self, heap: &Heap) -> &mut ShadowGraph {
        self.shadow.get_or_insert_with(|| {
            let sizes = heap.registry().types().iter().map(|t| t.slot_bytes() as u64).collect();
            ShadowGraph::new(sizes, heap.config().global_words)
        })
    }

    fn ingest(&mut self, heap: &Heap, events: Vec<HeapEvent>) {
        self.shadow_for(heap);
        for event in events {
            self.apply(heap, event);
        }
        let faults = std::mem::take(&mut self.epoch.faults);
        if !faults.is_empty() {
            self.report.record(Check::Shadow, None, faults);
        }
    }

    fn apply(&mut self, heap: &Heap, event: HeapEvent) {
        let shadow = self.shadow.as_mut().expect("shadow initialized");
        let result = match event {
            HeapEvent::Construct { addr, ty, ref fields } => {
                self.epoch.constructs += 1;
                shadow.construct(addr, ty, fields).map(|id| {
                    if self.dead_since.len() <= id {
                        self.dead_since.resize(id + 1, None);
                    }
                })
            }
            HeapEvent::RootPush { ref values } => shadow.push(values),
            HeapEvent::RootPop { count } => shadow.pop(count),
            HeapEvent::RootSet { position, value } => shadow.set(position, value),
            HeapEvent::GlobalSet { index, value } => shadow.set_global(index, value),
            HeapEvent::CollectionStart { .. } => {
                self.start_collection();
                Ok(())
            }
            HeapEvent::Evacuate { from, to } => {
                let rooted = shadow.resolve(from).is_some_and(|id| self.roots_at_start.binary_search(&id).is_ok());
                self.epoch.evacuated += 1;
                let moved = shadow.rebind(from, to);
                if rooted {
                    Err(format!("root-referenced object at {from:#x} was moved"))
                } else {
                    moved.map(drop)
                }
            }
            HeapEvent::Reclaim { addr } | HeapEvent::Release { addr } => {
                let is_release = matches!(event, HeapEvent::Release { .. });
                match shadow.release(addr) {
                    Ok(id) => {
                        if self.live_at_start.get(id).copied().unwrap_or(false) {
                            self.epoch.safety.push(format!("node {id} at {addr:#x} released while reachable"));
                        }
                        let young = shadow.node(id).born + 1 == shadow.epoch();
                        if is_release {
                            if young {
                                self.epoch.faults.push(format!("young node {id} released by the decrement walk"));
                            }
                            self.epoch.released.push(id);
                        } else {
                            if !young {
                                self.epoch.faults.push(format!("old node {id} reclaimed by the nursery sweep"));
                            }
                            self.epoch.reclaimed.push(id);
                        }
                        Ok(())
                    }
                    Err(e) => Err(e),
                }
            }
            HeapEvent::Touch { addr } => match shadow.resolve(addr) {
                Some(id) => {
                    self.epoch.touched.push(id);
                    Ok(())
                }
                None => Err(format!("collector touched {addr:#x} which holds no object")),
            },
            HeapEvent::CollectionEnd { record } => {
                self.end_collection(heap, &record);
                Ok(())
            }
        };
        if let Err(e) = result {
            self.epoch.faults.push(e);
        }
    }

    fn start_collection(&mut self) {
        let shadow = self.shadow.as_mut().expect("shadow initialized");
        let constructs = self.epoch.constructs;
        let faults = std::mem::take(&mut self.epoch.faults);
        self.epoch = Epoch { constructs, faults, ..Epoch::default() };
        let roots = shadow.conservative_roots();
        let bfs = shadow.closure(&roots);
        let fix = shadow.closure_fixpoint(&roots);
        let precise = shadow.precise_roots();
        let precise_bfs = shadow.closure(&precise);
        let precise_fix = shadow.closure_fixpoint(&precise);
        let mut failures = Vec::new();
        if bfs != fix || precise_bfs != precise_fix {
            failures.push("breadth-first and fixpoint reachability disagree".to_owned());
        }
        if precise_bfs.iter().zip(&bfs).any(|(&p, &c)| p && !c) {
            failures.push("precise reachability is not contained in conservative reachability".to_owned());
        }
        let index = shadow.epoch();
        shadow.begin_collection();
        self.report.record(Check::Traversal, Some(index), failures);
        self.live_at_start = bfs;
        self.roots_at_start = roots;
    }

    fn end_collection(&mut self, heap: &Heap, record: &CollectionRecord) {
        let k = record.index;
        let some_k = Some(k);
        self.report.collections += 1;
        let epoch = std::mem::take(&mut self.epoch);
        let shadow = self.shadow.as_ref().expect("shadow initialized");
        let nodes = shadow.nodes();

        self.report.record(Check::Shadow, some_k, epoch.faults);
        self.report.record(Check::Safety, some_k, epoch.safety);

        // Record fields against observed events.
        let mut rec = Vec::new();
        let young_reachable = nodes
            .iter()
            .enumerate()
            .filter(|(id, n)| n.born == k && self.live_at_start[*id])
            .count() as u64;
        let checks = [
            ("marked", record.marked, young_reachable),
            ("marked split", record.marked, record.evacuated + record.promoted_in_place),
            ("evacuated", record.evacuated, epoch.evacuated),
            ("reclaimed", record.reclaimed, epoch.reclaimed.len() as u64),
            ("released", record.released, epoch.released.len() as u64),
            ("allocations", record.allocations, epoch.constructs),
            ("budget", record.budget, heap.config().decrement_budget(epoch.constructs)),
            ("deferred_backlog", record.deferred_backlog, heap.worklist().len() as u64),
            ("committed_bytes", record.committed_bytes, heap.committed_bytes()),
        ];
        for (name, got, want) in checks {
            if got != want {
                rec.push(format!("{name} = {got}, oracle expects {want}"));
            }
        }
        self.report.record(Check::RecordConsistency, some_k, rec);

        // Effectiveness.
        let eff = if record.deferred_backlog == 0 || record.released == record.budget {
            vec![]
        } else {
            vec![format!("backlog {} with released {} below budget {}", record.deferred_backlog, record.released, record.budget)]
        };
        self.report.record(Check::Effectiveness, some_k, eff);

        // Pause work bound.
        let bound = WorkBound::for_heap(heap).limit(heap, record, self.prev_root_words);
        let pause = if record.work_units <= bound {
            vec![]
        } else {
            vec![format!("work_units {} exceed bound {bound}", record.work_units)]
        };
        self.report.record(Check::PauseBound, some_k, pause);
        self.prev_root_words = record.root_words;

        // Fringe touching.
        let mut allowed: HashSet<NodeId> = HashSet::new();
        allowed.extend(self.roots_at_start.iter().copied());
        allowed.extend(self.prev_roots.iter().copied());
        for &id in self.prev_worklist.iter().filter_map(|&a| shadow.resolve(a)).collect::<Vec<_>>().iter() {
            allowed.insert(id);
        }
        for &id in &epoch.released {
            allowed.insert(id);
            allowed.extend(nodes[id].children());
        }
        for n in nodes {
            if n.born == k && !n.released {
                allowed.extend(n.children());
            }
        }
        // Released nodes are no longer resolvable; their touches were recorded by id.
        let fringe: Vec<String> = epoch
            .touched
            .iter()
            .filter(|&&id| nodes[id].born < k && !allowed.contains(&id))
            .take(8)
            .map(|id| format!("old node {id} touched outside the fringe"))
            .collect();
        self.report.record(Check::Fringe, some_k, fringe);

        self.check_heap(heap, some_k, true);

        // Memory bound against precise live bytes.
        let shadow = self.shadow.as_ref().expect("shadow initialized");
        let reachable = shadow.closure(&shadow.precise_roots());
        let live_bytes: u64 = nodes_bytes(shadow, &reachable);
        let slack = (1u64 << 20).max(live_bytes / 4);
        let limit = live_bytes + heap.config().nursery_threshold_bytes as u64 + slack;
        let mem = if record.committed_bytes <= limit {
            vec![]
        } else {
            vec![format!("committed {} exceeds live {live_bytes} + nursery + slack {slack}", record.committed_bytes)]
        };
        self.report.record(Check::MemoryBound, some_k, mem);

        // Conservative-retention gap.
        let worklist_nodes: Vec<NodeId> = heap.worklist().filter_map(|a| shadow.resolve(a)).collect();
        let deferred = shadow.closure(&worklist_nodes);
        let gap: Vec<String> = shadow
            .live()
            .filter(|&id| !reachable[id] && !self.live_at_start[id] && !deferred[id])
            .take(8)
            .map(|id| format!("node {id} is retained with no root collision or pending decrement"))
            .collect();
        self.report.record(Check::RetentionGap, some_k, gap);

        // Bounded liveness.
        let prior = self.budget_sums.last().copied().unwrap_or(0);
        self.budget_sums.push(prior + record.budget);
        let mut liveness = Vec::new();
        let due: Vec<u64> = self
            .obligations
            .iter()
            .filter(|&&(ok, debt)| {
                // collections ok+1 ..= k-1 have released up to their budgets
                k > ok && self.budget_sums[k as usize - 1] - self.budget_sums[ok as usize] >= debt
            })
            .map(|&(ok, _)| ok)
            .collect();
        if let Some(&latest) = due.iter().max() {
            for id in shadow.live() {
                if !self.live_at_start[id] && self.dead_since[id].is_some_and(|d| d <= latest) {
                    liveness.push(format!("node {id} dead since collection {} still unreleased", self.dead_since[id].unwrap()));
                    if liveness.len() >= 8 {
                        break;
                    }
                }
            }
            self.obligations.retain(|o| !due.contains(&o.0));
        }
        let mut debt = 0;
        for id in shadow.live() {
            if self.live_at_start[id] {
                self.dead_since[id] = None;
            } else {
                debt += 1;
                self.dead_since[id].get_or_insert(k);
            }
        }
        self.obligations.push((k, debt));
        self.report.record(Check::BoundedLiveness, some_k, liveness);

        self.prev_roots = std::mem::take(&mut self.roots_at_start);
        self.prev_worklist = heap.worklist().collect();
    }

    fn check_between(&mut self, heap: &Heap) {
        self.check_heap(heap, None, false);
    }

    /// Layout, edge-age, count and page checks against the heap's public views.
    fn check_heap(&mut self, heap: &Heap, collection: Option<u64>, boundary: bool) {
        let shadow = self.shadow.as_ref().expect("shadow initialized");
        let nodes = shadow.nodes();
        let objects: Vec<_> = heap.objects().collect();

        // Layout: allocated slots and shadow live nodes coincide with equal contents.
        let mut layout = Vec::new();
        if objects.len() != shadow.live_count() {
            layout.push(format!("heap holds {} objects, shadow {}", objects.len(), shadow.live_count()));
        }
        for obj in &objects {
            let Some(id) = shadow.resolve(obj.addr) else {
                layout.push(format!("heap object at {:#x} has no shadow node", obj.addr));
                continue;
            };
            let node = &nodes[id];
            if node.ty != obj.header.type_id() {
                layout.push(format!("node {id} type {:?} but header says {:?}", node.ty, obj.header.type_id()));
                continue;
            }
            for (slot, (&word, field)) in obj.fields.iter().zip(&node.fields).enumerate() {
                let want = match *field {
                    ShadowField::Word(w) => w,
                    ShadowField::Child(c) => nodes[c].addr,
                };
                if word != want {
                    layout.push(format!("node {id} slot {slot} holds {word:#x}, shadow expects {want:#x}"));
                }
            }
            if layout.len() >= 8 {
                break;
            }
        }
        self.report.record(Check::Layout, collection, layout);

        // Every old object points only at allocated old objects.
        let by_addr: BTreeMap<u64, &crate::inspect::ObjectView> = objects.iter().map(|o| (o.addr, o)).collect();
        let mut edges = Vec::new();
        for obj in objects.iter().filter(|o| o.header.is_old() || boundary) {
            if boundary && !obj.header.is_old() {
                edges.push(format!("object at {:#x} is still young after a collection", obj.addr));
                continue;
            }
            for slot in heap.type_mask(obj.header.type_id()).iter() {
                let target = obj.fields[slot];
                match by_addr.get(&target) {
                    Some(t) if t.header.is_old() && !t.header.is_forwarded() => {}
                    Some(_) => edges.push(format!("old object at {:#x} slot {slot} points at young {target:#x}", obj.addr)),
                    None => edges.push(format!("old object at {:#x} slot {slot} points at {target:#x} which holds no object", obj.addr)),
                }
            }
        }
        edges.truncate(8);
        self.report.record(Check::NoOldToYoung, collection, edges);

        if !boundary {
            return;
        }

        let nursery = if heap.young_count() == 0 { vec![] } else { vec![format!("{} young slots survive the sweep", heap.young_count())] };
        self.report.record(Check::NurseryEmpty, collection, nursery);

        // Reference counts equal old in-degrees; ROOTREF marks exactly the scanned roots.
        let deg = shadow.in_degrees();
        let snapshot: Vec<u64> = heap.root_snapshot().to_vec();
        let queued: HashSet<u64> = heap.worklist().collect();
        let mut rc = Vec::new();
        let mut rootref = Vec::new();
        for obj in &objects {
            let Some(id) = shadow.resolve(obj.addr) else { continue };
            if obj.header.rc() != deg[id] {
                rc.push(format!("node {id} at {:#x} has rc {} but {} old in-edges", obj.addr, obj.header.rc(), deg[id]));
            }
            let rooted = self.live_at_start.get(id).is_some() && self.roots_at_start.binary_search(&id).is_ok();
            if obj.header.is_rootref() != rooted {
                rootref.push(format!("node {id} rootref {} but root membership {rooted}", obj.header.is_rootref()));
            }
            if obj.header.is_queued() != queued.contains(&obj.addr) {
                rc.push(format!("node {id} queued flag disagrees with worklist membership"));
            }
            if obj.header.is_marked() || obj.header.is_forwarded() {
                rc.push(format!("node {id} carries collection-only flags at a boundary"));
            }
        }
        let mut want: Vec<u64> = self.roots_at_start.iter().map(|&id| nodes[id].addr).collect();
        want.sort_unstable();
        if snapshot != want {
            rootref.push(format!("heap root snapshot has {} entries, oracle scanned {}", snapshot.len(), want.len()));
        }
        rc.truncate(8);
        rootref.truncate(8);
        self.report.record(Check::RcExact, collection, rc);
        self.report.record(Check::RootRef, collection, rootref);

        // Pages: allocation bitmap and free-list partition the slots; filing matches state.
        let mut pages = Vec::new();
        let mut binned = 0;
        for p in 0..heap.page_count() {
            let view = heap.page_view(p);
            match view.state {
                PageState::Free => {
                    if !view.allocated.is_empty() || !heap.page_is_listed_free(p) {
                        pages.push(format!("free page {p} holds objects or is not on the free page list"));
                    }
                }
                PageState::OldPartial | PageState::OldFull => {
                    let full = view.allocated.len() == view.slots;
                    if full != (view.state == PageState::OldFull) || view.allocated.is_empty() {
                        pages.push(format!("page {p} in state {:?} holds {}/{} objects", view.state, view.allocated.len(), view.slots));
                    }
                    if view.state == PageState::OldPartial {
                        binned += 1;
                        if view.bin != heap.config().bin_for(view.allocated.len() as u32, view.slots as u32) || !heap.page_is_binned(p) {
                            pages.push(format!("page {p} filed in the wrong utilization bin"));
                        }
                    }
                    match &view.free_list {
                        Some(list) => {
                            let mut all: Vec<usize> = list.iter().chain(view.allocated.iter()).copied().collect();
                            all.sort_unstable();
                            if all != (0..view.slots).collect::<Vec<_>>() {
                                pages.push(format!("page {p} free-list and bitmap do not partition its slots"));
                            }
                        }
                        None => pages.push(format!("page {p} free-list is malformed")),
                    }
                    if view.live_count as usize != view.allocated.len() {
                        pages.push(format!("page {p} live count {} but {} allocated", view.live_count, view.allocated.len()));
                    }
                }
                other => pages.push(format!("page {p} left in state {other:?} after collection")),
            }
        }
        if binned != heap.binned_pages() {
            pages.push(format!("{} pages binned but {binned} partial pages", heap.binned_pages()));
        }
        pages.truncate(8);
        self.report.record(Check::PageDuality, collection, pages);
    }
}

fn nodes_bytes(shadow: &ShadowGraph, set: &[bool]) -> u64 {
    shadow.nodes().iter().zip(set).filter(|(n, &s)| s && !n.released).map(|(n, _)| n.bytes).sum()
}
