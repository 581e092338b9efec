use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robustlearn::online::*;
use robustlearn::universe::*;

fn class_of(n: usize, masks: &[u64]) -> Arc<HypothesisClass> {
    let space = InstanceSpace::new(n).unwrap();
    Arc::new(HypothesisClass::new(space, masks.iter().map(|&m| TruthTable::new(n, m)).collect()).unwrap())
}

/// Largest number of mistakes an adversary can force from `learner` with
/// labels that some remaining row agrees with. Only mistake rounds matter,
/// since a conservative learner ignores the rest.
fn worst_case(learner: &Soa, rows: &[u64], n: usize) -> usize {
    let mut best = 0;
    for x in 0..n {
        let y = learner.predict(x).flip();
        let left: Vec<u64> = rows.iter().copied().filter(|r| (r >> x & 1 == 1) == y.is_pos()).collect();
        if left.is_empty() {
            continue;
        }
        let mut next = learner.clone();
        next.observe(LabeledExample::new(x, y));
        best = best.max(1 + worst_case(&next, &left, n));
    }
    best
}

#[test]
fn thresholds_soa() {
    let c = Arc::new(make_threshold_class(8).unwrap());
    let rows: Vec<u64> = c.rows().iter().map(|r| r.positives()).collect();
    assert_eq!(worst_case(&soa(c.clone()), &rows, 8), 3);
    let mut s = soa(c.clone());
    let seq = forcing_sequence(&mut s);
    let rec = run_sequence(&mut soa(c), &seq).unwrap();
    assert_eq!(rec.mistakes.len(), 3);
    assert!(!rec.exhausted);
}

#[test]
fn cube_soa() {
    let c = Arc::new(HypothesisClass::full_cube(3).unwrap());
    let rows: Vec<u64> = (0..8).collect();
    assert_eq!(worst_case(&soa(c.clone()), &rows, 3), 3);
    let seq = forcing_sequence(&mut soa(c.clone()));
    assert_eq!(run_sequence(&mut soa(c), &seq).unwrap().mistakes.len(), 3);
}

#[test]
fn trivial_sequences() {
    let c = Arc::new(make_threshold_class(8).unwrap());
    assert!(run_sequence(&mut soa(c.clone()), &[]).unwrap().mistakes.is_empty());
    let rep = vec![LabeledExample::new(5, Label::Neg); 20];
    assert!(run_sequence(&mut soa(c.clone()), &rep).unwrap().mistakes.len() <= 1);
    let single = class_of(4, &[0b1010]);
    let seq: Vec<_> = (0..4).map(|x| LabeledExample::new(x, single.row(0).eval(x))).collect();
    assert!(run_sequence(&mut soa(single), &seq).unwrap().mistakes.is_empty());
}

#[test]
fn random_realizable_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..1000 {
        let n = 10;
        let mut masks = std::collections::BTreeSet::new();
        while masks.len() < 15 {
            masks.insert(rng.gen::<u64>() & 0x3ff);
        }
        let masks: Vec<u64> = masks.into_iter().collect();
        let c = class_of(n, &masks);
        let lit = littlestone_dimension(&c);
        let target = c.row(rng.gen_range(0..c.len()));
        let seq: Vec<_> = (0..30).map(|_| {
            let x = rng.gen_range(0..n);
            LabeledExample::new(x, target.eval(x))
        }).collect();
        let rec = run_sequence(&mut soa(c), &seq).unwrap();
        assert!(rec.mistakes.len() <= lit, "trial {trial}");
        assert!(!rec.exhausted);
    }
}

#[test]
fn always_update_variant() {
    let c = Arc::new(make_threshold_class(8).unwrap());
    let mut s = soa(c).always_update();
    assert!(!s.is_conservative());
    s.observe(LabeledExample::new(0, Label::Pos));
    assert_eq!(s.updates(), 1);
}

#[test]
fn shared_cache_across_threads() {
    let c = Arc::new(HypothesisClass::full_cube(4).unwrap());
    let shared = SoaShared::new(c.clone());
    let seqs: Vec<Vec<LabeledExample>> = (0..8u64)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let t = rng.gen_range(0..16u64);
            (0..12).map(|_| {
                let x = rng.gen_range(0..4);
                LabeledExample::new(x, Label::from_bool(t >> x & 1 == 1))
            }).collect()
        })
        .collect();
    let together: Vec<MistakeRecord> = std::thread::scope(|sc| {
        let hs: Vec<_> = seqs
            .iter()
            .map(|seq| {
                let shared = shared.clone();
                sc.spawn(move || run_sequence(&mut Soa::new(shared), seq).unwrap())
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (seq, rec) in seqs.iter().zip(&together) {
        assert_eq!(*rec, run_sequence(&mut soa(c.clone()), seq).unwrap());
    }
}

fn small_class() -> impl Strategy<Value = (usize, Vec<u64>)> {
    (1usize..=4).prop_flat_map(|n| {
        let width = 1u64 << n;
        (Just(n), proptest::collection::btree_set(0..width, 1..=width as usize))
            .prop_map(|(n, s)| (n, s.into_iter().collect()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn soa_worst_case_is_lit((n, rows) in small_class()) {
        let c = class_of(n, &rows);
        let lit = littlestone_dimension(&c);
        prop_assert_eq!(worst_case(&soa(c), &rows, n), lit);
    }

    #[test]
    fn conservative_and_bounded((n, rows) in small_class(), picks in proptest::collection::vec((0usize..4, any::<prop::sample::Index>()), 0..40)) {
        let c = class_of(n, &rows);
        let lit = littlestone_dimension(&c);
        let target = rows[picks.first().map_or(0, |p| p.1.index(rows.len()))];
        let seq: Vec<_> = picks.iter().map(|(x, _)| {
            let x = x % n;
            LabeledExample::new(x, Label::from_bool(target >> x & 1 == 1))
        }).collect();
        let mut s = soa(c);
        let mut before = s.table();
        for e in &seq {
            let right = before.eval(e.x) == e.y;
            s.observe(*e);
            if right {
                prop_assert_eq!(s.table(), before);
            }
            before = s.table();
        }
        prop_assert!(s.updates() <= lit);
        prop_assert!(!s.exhausted());
    }
}

/// Every table the SOA can output: one per version space reachable by
/// realizable feedback.
fn image_class(c: &Arc<HypothesisClass>) -> HypothesisClass {
    let shared = SoaShared::new(c.clone());
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![c.all()];
    let mut tables = std::collections::BTreeSet::new();
    while let Some(v) = stack.pop() {
        if !seen.insert(v.clone()) {
            continue;
        }
        tables.insert(shared.table(&v).positives());
        for x in 0..c.space().size() {
            for y in [Label::Pos, Label::Neg] {
                let next = c.restrict(&v, x, y);
                if !next.is_empty() {
                    stack.push(next);
                }
            }
        }
    }
    let n = c.space().size();
    HypothesisClass::new(c.space(), tables.into_iter().map(|t| TruthTable::new(n, t)).collect()).unwrap()
}

#[test]
fn image_class_dimensions() {
    let mut out = std::io::stdout().lock();
    let thresholds = Arc::new(make_threshold_class(8).unwrap());
    let cube = Arc::new(HypothesisClass::full_cube(3).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut classes = vec![("thresholds-8".to_string(), thresholds), ("cube-3".to_string(), cube)];
    for i in 0..6 {
        let mut masks = std::collections::BTreeSet::new();
        while masks.len() < 12 {
            masks.insert(rng.gen::<u64>() & 0xff);
        }
        classes.push((format!("random-{i}"), class_of(8, &masks.into_iter().collect::<Vec<_>>())));
    }
    for (name, c) in classes {
        let im = image_class(&c);
        let (vc, dual) = (vc_dimension(&im), dual_vc_dimension(&im));
        use std::io::Write;
        writeln!(out, "image of SOA on {name}: {} tables, vc {vc}, dual vc {dual}, class vc {}", im.len(), vc_dimension(&c)).unwrap();
        // singleton version spaces are reachable, so every row is an output
        assert!(c.rows().iter().all(|r| im.rows().contains(r)));
        assert!(vc >= vc_dimension(&c));
        assert!(dual < 1 << (vc + 1));
    }
}
