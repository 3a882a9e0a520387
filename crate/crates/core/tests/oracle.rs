mod support;

use catalpa::config::WORD_BYTES;
use catalpa::heap::HEAP_BASE;
use catalpa::oracle::{check_invariants, Check};
use catalpa::{Heap, HeapConfig, Mutator, RefMask, Value, Verifier};
use proptest::prelude::*;
use support::Driver;

#[test]
fn random_runs_pass_every_check() {
    for seed in 0..20 {
        let mut d = Driver::new(seed, 8 << 10);
        d.run(3000);
        d.heap.collect();
        let report = check_invariants(&d.verifier, &mut d.heap);
        assert!(report.collections >= 5, "seed {seed}: only {} collections", report.collections);
        assert!(report.passed(), "seed {seed}: {:#?}", report.violations);
        assert!(report.evaluated(Check::Safety) >= 5);
    }
}

#[test]
fn healthy_run_checks_between_collections_too() {
    let mut d = Driver::new(99, 8 << 10);
    for _ in 0..30 {
        d.run(100);
        let report = check_invariants(&d.verifier, &mut d.heap);
        assert!(report.passed(), "{:#?}", report.violations);
    }
}

#[test]
fn skipped_increment_is_caught_by_rc_check() {
    let mut heap = Heap::new(HeapConfig::default()).unwrap();
    let leaf = heap.register_type("Leaf", 1, RefMask::EMPTY).unwrap();
    let one = heap.register_type("One", 1, RefMask::from_slots(&[0])).unwrap();
    let verifier = Verifier::new();
    verifier.attach(&mut heap);
    let b = heap.construct(leaf, &[5u64.into()]).unwrap();
    let a = heap.construct(one, &[b.into()]).unwrap();
    heap.root_push(&[a.into()]).unwrap();
    heap.inject_skipped_increments(1);
    heap.collect();
    let report = verifier.report();
    assert_eq!(report.failed(Check::RcExact), 1);
    let moved = heap.read_ref(a, 0).unwrap();
    let named = report.violations.iter().find(|v| v.check == Check::RcExact).unwrap();
    assert!(named.detail.contains(&format!("{:#x}", moved.addr)), "{}", named.detail);
}

#[test]
fn corrupted_field_is_caught_as_old_to_young_edge() {
    let mut heap = Heap::new(HeapConfig::default()).unwrap();
    let leaf = heap.register_type("Leaf", 1, RefMask::EMPTY).unwrap();
    let one = heap.register_type("One", 1, RefMask::from_slots(&[0])).unwrap();
    let verifier = Verifier::new();
    verifier.attach(&mut heap);
    let b = heap.construct(leaf, &[5u64.into()]).unwrap();
    let a = heap.construct(one, &[b.into()]).unwrap();
    heap.root_push(&[a.into()]).unwrap();
    heap.collect();
    assert!(verifier.report().passed());
    let young = heap.construct(leaf, &[6u64.into()]).unwrap();
    heap.root_push(&[young.into()]).unwrap();
    heap.corrupt_field(a.addr, 0, young.addr);
    let report = check_invariants(&verifier, &mut heap);
    assert_eq!(report.failed(Check::NoOldToYoung), 1);
    assert!(report.failed(Check::Layout) > 0);
}

#[test]
fn validation_agrees_with_shadow_for_every_heap_word() {
    let mut d = Driver::new(7, 8 << 10);
    d.run(1500);
    d.verifier.check_now(&mut d.heap);
    let end = HEAP_BASE + d.heap.committed_bytes();
    let mut checked = 0;
    for word in (HEAP_BASE - 64..end + 64).step_by(WORD_BYTES / 2).chain([0, 42, u64::MAX]) {
        let want = d.verifier.with_shadow(|s| s.canonicalize(word).map(|id| s.node(id).addr)).unwrap();
        assert_eq!(d.heap.validate_candidate(word), want, "word {word:#x}");
        checked += 1;
    }
    assert!(checked > 1000);
}

#[test]
fn traversals_agree_on_random_graphs() {
    let mut d = Driver::new(11, 1 << 20);
    d.run(10_000);
    d.verifier.check_now(&mut d.heap);
    let (bfs, fix) = d
        .verifier
        .with_shadow(|s| {
            let roots = s.precise_roots();
            (s.closure(&roots), s.closure_fixpoint(&roots))
        })
        .unwrap();
    assert_eq!(bfs, fix);
    assert!(bfs.iter().filter(|&&b| b).count() > 10);
}

#[test]
fn raw_word_collision_retains_object() {
    let mut heap = Heap::new(HeapConfig::default()).unwrap();
    let leaf = heap.register_type("Leaf", 1, RefMask::EMPTY).unwrap();
    let verifier = Verifier::new();
    verifier.attach(&mut heap);
    let a = heap.construct(leaf, &[1u64.into()]).unwrap();
    heap.root_push(&[Value::Word(a.addr + 3)]).unwrap();
    let r = heap.collect();
    assert_eq!(r.promoted_in_place, 1);
    assert!(verifier.reachable_set().is_empty());
    assert!(verifier.report().passed(), "{:#?}", verifier.report().violations);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn seeded_runs_hold_all_invariants(seed in any::<u64>(), steps in 200usize..2000, nursery_pages in 1usize..6) {
        let mut d = Driver::new(seed, nursery_pages * 4096);
        d.run(steps);
        d.heap.collect();
        let report = check_invariants(&d.verifier, &mut d.heap);
        prop_assert!(report.passed(), "{:#?}", report.violations);
    }

    #[test]
    fn canonicalization_is_idempotent(seed in any::<u64>(), probes in proptest::collection::vec(any::<u32>(), 64)) {
        let mut d = Driver::new(seed, 8 << 10);
        d.run(500);
        let span = d.heap.committed_bytes().max(1);
        for p in probes {
            let word = HEAP_BASE + u64::from(p) % span;
            if let Some(base) = d.heap.validate_candidate(word) {
                prop_assert_eq!(d.heap.validate_candidate(base), Some(base));
                prop_assert!(base <= word && word - base < 8 * 65);
            }
        }
    }

    #[test]
    fn shadow_graph_is_acyclic(seed in any::<u64>()) {
        let mut d = Driver::new(seed, 8 << 10);
        d.run(800);
        d.verifier.check_now(&mut d.heap);
        let ok = d.verifier.with_shadow(|s| {
            s.nodes().iter().enumerate().all(|(id, n)| n.children().all(|c| c < id))
        }).unwrap();
        prop_assert!(ok);
    }
}
