use proptest::prelude::*;
use robustlearn::perturb::*;
use robustlearn::universe::*;

fn space(n: usize) -> InstanceSpace {
    InstanceSpace::new(n).unwrap()
}

fn ex(x: usize, y: i64) -> LabeledExample {
    LabeledExample::new(x, Label::from_sign(y).unwrap())
}

/// Scans every z in U(x) through the set-list representation.
fn scan_loss(table: &TruthTable, e: LabeledExample, sets: &[Vec<usize>]) -> u32 {
    sets[e.x].iter().any(|&z| table.eval(z) != e.y) as u32
}

#[test]
fn identity_reduces_to_zero_one() {
    let u = PerturbationSet::identity(space(4));
    let t = TruthTable::new(4, 0b0101);
    for x in 0..4 {
        for y in [Label::Pos, Label::Neg] {
            let e = LabeledExample::new(x, y);
            assert_eq!(robust_loss(&t, e, &u), (t.eval(x) != y) as u32);
        }
    }
    let o = CanonicalOracle::new(u);
    assert_eq!(o.respond(&t, ex(1, 1)), OracleResponse::Counterexample(1));
    assert_eq!(o.respond(&t, ex(0, 1)), OracleResponse::RobustlyCorrect);
}

#[test]
fn loss_examples() {
    let full = PerturbationSet::new(space(3), &[vec![0, 1, 2], vec![0, 1, 2], vec![0, 1, 2]]).unwrap();
    assert_eq!(robust_loss(&TruthTable::constant(3, Label::Pos), ex(0, -1), &full), 1);
    // wrong only on the third element of U(0)
    assert_eq!(robust_loss(&TruthTable::new(3, 0b011), ex(0, 1), &full), 1);
    assert_eq!(robust_loss(&TruthTable::new(3, 0b111), ex(0, 1), &full), 0);
}

#[test]
fn canonical_oracle_picks_smallest() {
    let sets = vec![vec![0], vec![1], vec![2], vec![3], vec![4], vec![5], vec![6, 5, 2, 0]];
    let u = PerturbationSet::new(space(7), &sets).unwrap();
    // wrong on 2 and 5 for label +1
    let t = TruthTable::new(7, 0b1011011);
    assert_eq!(CanonicalOracle::new(u).respond(&t, ex(6, 1)), OracleResponse::Counterexample(2));
}

#[test]
fn risk_and_opt() {
    let u = PerturbationSet::identity(space(2));
    let d = FiniteDistribution::new(vec![(ex(0, 1), 0.3), (ex(0, -1), 0.7)]).unwrap();
    let class = HypothesisClass::full_cube(2).unwrap();
    let (opt, row) = opt_robust_risk(&class, &d, &u);
    assert!((opt - 0.3).abs() < 1e-12);
    assert_eq!(class.row(row).eval(0), Label::Neg);
    for r in class.rows() {
        assert!(opt <= robust_risk(r, &d, &u));
    }
    let quarter = FiniteDistribution::new(vec![(ex(0, 1), 0.25), (ex(1, 1), 0.75)]).unwrap();
    assert_eq!(robust_risk(&TruthTable::new(2, 0b10), &quarter, &u), 0.25);
}

#[test]
fn threshold_construction_risk() {
    let class = make_threshold_class(8).unwrap();
    let u = PerturbationSet::neighbors(class.space());
    // labels of row 4 are constant on U(0) and U(7)
    let d = FiniteDistribution::uniform(&[ex(0, 1), ex(7, -1)]).unwrap();
    let risks: Vec<f64> = class.rows().iter().map(|r| robust_risk(r, &d, &u)).collect();
    assert!(risks.contains(&0.0));
    for r in &risks {
        assert!(*r == 0.0 || *r >= 0.5);
    }
}

#[test]
fn empirical_loss() {
    let u = PerturbationSet::identity(space(2));
    let c = TruthTable::constant(2, Label::Pos);
    let l = empirical_robust_loss(&c, &[ex(0, 1), ex(1, -1)], &u).unwrap();
    assert!(l > 0.0 && l < 1.0);
    assert_eq!(empirical_robust_loss(&c, &[ex(0, 1)], &u).unwrap(), 0.0);
    assert!(empirical_robust_loss(&c, &[], &u).is_err());
}

#[test]
fn majority_ties_go_positive() {
    let a = TruthTable::new(2, 0b01);
    let b = TruthTable::new(2, 0b10);
    assert_eq!(Predictor::majority(&[a, b]).table().positives(), 0b11);
    assert_eq!(Predictor::weighted_majority(&[a, b], &[0.0, 0.0]).table().positives(), 0b11);
    assert_eq!(Predictor::weighted_majority(&[a, b], &[0.0, -0.1]).table().positives(), 0b01);
    assert!(vote_positive(1.0, 1.0 + 1e-12));
    assert!(!vote_positive(1.0, 1.1));
}

#[test]
fn attack_check_catches_forgeries() {
    let u = PerturbationSet::neighbors(space(5));
    let oracle = CanonicalOracle::new(u.clone());
    let mut logged = LoggedOracle::new(&oracle);
    let p = Predictor::lookup(TruthTable::new(5, 0b00111));
    for x in 0..5 {
        logged.query(&p, ex(x, 1));
        logged.query(&p, ex(x, -1));
    }
    let log = logged.take_log();
    assert_eq!(attack_check(&log, &u).unwrap(), 10);

    let text = log.to_json_lines();
    let back = QueryLog::from_json_lines(&text).unwrap();
    assert_eq!(back, log);

    // a counterexample outside U(x)
    let forged = text.replacen("{\"counterexample\":3}", "{\"counterexample\":0}", 1);
    assert_ne!(forged, text);
    let bad = QueryLog::from_json_lines(&forged).unwrap();
    assert!(matches!(attack_check(&bad, &u), Err(robustlearn::Error::ContractViolation(_))));

    // a certificate for a predictor that is not robustly correct
    let mut lie = QueryLog::new();
    lie.push(QueryRecord {
        fingerprint: p.fingerprint(),
        table: *p.table(),
        example: ex(2, 1),
        response: OracleResponse::RobustlyCorrect,
    });
    assert!(attack_check(&lie, &u).is_err());
}

#[test]
fn perturbation_text_format() {
    let u = PerturbationSet::parse("instances 3\nu 0 : 0 1\nu 1 : 1\nu 2 : 0 2 # c\n").unwrap();
    assert_eq!(u.mask(2), 0b101);
    assert_eq!(PerturbationSet::parse(&u.format()).unwrap(), u);
    assert!(PerturbationSet::parse("instances 2\nu 0 : 0\n").is_err());
    assert!(PerturbationSet::parse("instances 2\nu 0 : 0\nu 1 :\n").is_err());
    assert!(PerturbationSet::parse("instances 2\nu 0 : 5\nu 1 : 1\n").is_err());
    assert!(PerturbationSet::parse("u 0 : 0\n").is_err());
}

#[test]
fn fingerprint_is_hex() {
    let p = Predictor::lookup(TruthTable::new(3, 0b101));
    let s = serde_json::to_string(&p.fingerprint()).unwrap();
    assert_eq!(s.len(), 18);
    assert_eq!(serde_json::from_str::<Fingerprint>(&s).unwrap(), p.fingerprint());
    assert_ne!(p.fingerprint(), Predictor::lookup(TruthTable::new(3, 0b100)).fingerprint());
}

fn instance() -> impl Strategy<Value = (usize, Vec<Vec<usize>>, Vec<u64>, u64)> {
    (2usize..=8).prop_flat_map(|n| {
        let set = proptest::collection::btree_set(0..n, 1..=n).prop_map(|s| s.into_iter().collect::<Vec<_>>());
        let extra = proptest::collection::vec(0..n, n);
        (Just(n), proptest::collection::vec(set, n), extra, any::<u64>())
            .prop_map(|(n, sets, extra, t)| (n, sets, extra.into_iter().map(|z| 1u64 << z).collect(), t))
    })
}

proptest! {
    #[test]
    fn loss_matches_scan_and_grows_with_u((n, sets, extra, t) in instance()) {
        let sp = space(n);
        let u = PerturbationSet::new(sp, &sets).unwrap();
        let bigger: Vec<u64> = (0..n).map(|x| u.mask(x) | extra[x]).collect();
        let w = PerturbationSet::from_masks(sp, bigger).unwrap();
        prop_assert!(u.is_subset_of(&w));
        let table = TruthTable::new(n, t);
        let oracle = CanonicalOracle::new(u.clone());
        for x in 0..n {
            for y in [Label::Pos, Label::Neg] {
                let e = LabeledExample::new(x, y);
                let l = robust_loss(&table, e, &u);
                prop_assert_eq!(l, scan_loss(&table, e, &sets));
                prop_assert!(l <= robust_loss(&table, e, &w));
                let r = oracle.respond(&table, e);
                prop_assert!(verify_response(&u, &table, e, r).is_ok());
                prop_assert_eq!(l == 0, r == OracleResponse::RobustlyCorrect);
                if let OracleResponse::Counterexample(z) = r {
                    let first = sets[x].iter().copied().filter(|&z| table.eval(z) != y).min();
                    prop_assert_eq!(Some(z), first);
                }
            }
        }
    }

    #[test]
    fn opt_is_min_over_rows(rows in proptest::collection::btree_set(0u64..16, 1..8), seed in any::<u64>()) {
        use rand::SeedableRng;
        let sp = space(4);
        let class = HypothesisClass::new(sp, rows.iter().map(|&r| TruthTable::new(4, r)).collect()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = PerturbationSet::random(sp, 0.4, true, &mut rng);
        let atoms: Vec<_> = (0..4).map(|x| (LabeledExample::new(x, Label::from_bool(seed >> x & 1 == 1)), 1.0 + x as f64)).collect();
        let d = FiniteDistribution::from_weights(atoms).unwrap();
        let (opt, row) = opt_robust_risk(&class, &d, &u);
        let brute = class.rows().iter().map(|r| {
            d.atoms().iter().filter(|(e, _)| u.members(e.x).any(|z| r.eval(z) != e.y)).map(|a| a.1).sum::<f64>()
        }).fold(f64::INFINITY, f64::min);
        prop_assert!((opt - brute).abs() < 1e-12);
        prop_assert!((robust_risk(class.row(row), &d, &u) - opt).abs() < 1e-12);
    }
}
