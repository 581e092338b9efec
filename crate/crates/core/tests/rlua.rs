use std::collections::HashSet;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robustlearn::harness::{generate_scenario, lit3_mix, Scenario, ScenarioSpec};
use robustlearn::online::{SoaFactory, SoaShared};
use robustlearn::perturb::*;
use robustlearn::rlua::*;
use robustlearn::universe::*;
use robustlearn::Error;

fn scenario(i: usize) -> Scenario {
    let mut spec = ScenarioSpec::realizable(lit3_mix(i));
    spec.atoms = Some(12);
    generate_scenario(&spec, 9000 + i as u64).unwrap()
}

fn zero_loss(t: &TruthTable, sample: &[LabeledExample], u: &PerturbationSet) -> bool {
    sample.iter().all(|e| u.members(e.x).all(|z| t.eval(z) == e.y))
}

/// Every (member errs at z) pattern over all z in U(x), with the label it came from.
fn labeled_patterns(sample: &[LabeledExample], members: &[TruthTable], u: &PerturbationSet) -> HashSet<(bool, Vec<bool>)> {
    let mut out = HashSet::new();
    for e in sample {
        for z in 0..u.space().size() {
            if u.contains(e.x, z) {
                out.insert((e.y.is_pos(), members.iter().map(|m| m.eval(z) != e.y).collect()));
            }
        }
    }
    out
}

/// Error patterns alone: two points with the same pattern are interchangeable for boosting.
fn patterns(sample: &[LabeledExample], members: &[TruthTable], u: &PerturbationSet) -> HashSet<Vec<bool>> {
    labeled_patterns(sample, members, u).into_iter().map(|p| p.1).collect()
}

fn pool_for(sc: &Scenario, sample: &[LabeledExample], n: usize) -> (Pool, QueryLog) {
    let f = SoaFactory::new(sc.shared.clone());
    let oracle = CanonicalOracle::new(sc.u.clone());
    let mut logged = LoggedOracle::new(&oracle);
    let pool = build_pool(sample, n, &f, &mut logged, sc.lit() + 2).unwrap();
    (pool, logged.take_log())
}

#[test]
fn pool_sizes() {
    let sc = scenario(1);
    let sample = sample_iid(&sc.dist, 6, 1);
    let (whole, _) = pool_for(&sc, &sample, 6);
    assert_eq!(whole.len(), 1);
    let (pool, log) = pool_for(&sc, &sample, 3);
    assert!(pool.len() <= 20);
    assert_eq!(pool.by_subset.len(), 20);
    assert!(attack_check(&log, &sc.u).is_ok());
    for (subset, &id) in &pool.by_subset {
        let sub: Vec<_> = subset.iter().map(|&i| sample[i]).collect();
        assert!(zero_loss(pool.members[id].table(), &sub, &sc.u));
    }
}

#[test]
fn discretizer_matches_enumeration() {
    for i in 0..50 {
        let sc = scenario(i);
        let sample = sample_iid(&sc.dist, 8, i as u64);
        let (pool, _) = pool_for(&sc, &sample, 3);
        let oracle = CanonicalOracle::new(sc.u.clone());
        let mut logged = LoggedOracle::new(&oracle);
        let dset = discretize(&sample, &pool, sc.space(), &mut logged).unwrap();
        let members = pool.tables();
        let got: HashSet<Vec<bool>> =
            dset.points.iter().map(|p| members.iter().map(|m| m.eval(p.z) != p.y).collect()).collect();
        assert_eq!(got.len(), dset.len(), "representatives are distinct");
        assert_eq!(got, patterns(&sample, &members, &sc.u), "scenario {i}");
        for p in &dset.points {
            assert!(sc.u.contains(sample[p.origin].x, p.z));
        }
        let d = dual_vc_dimension(&pool.as_class(sc.space()).unwrap());
        let all = labeled_patterns(&sample, &members, &sc.u);
        for label in [true, false] {
            let count = all.iter().filter(|p| p.0 == label).count() as f64;
            assert!(count <= sauer_count(pool.len(), d));
            if d > 0 {
                assert!(count <= sauer_envelope(pool.len(), d));
            }
        }
    }
}

#[test]
fn discretizer_with_identity_and_single_member() {
    let c = Arc::new(make_threshold_class(8).unwrap());
    let u = PerturbationSet::identity(c.space());
    let sample: Vec<_> = (0..8).map(|x| LabeledExample::new(x, Label::from_bool(x < 5))).collect();
    let f = SoaFactory::new(SoaShared::new(c.clone()));
    let oracle = CanonicalOracle::new(u.clone());
    let mut logged = LoggedOracle::new(&oracle);
    let pool = build_pool(&sample, 8, &f, &mut logged, 5).unwrap();
    assert_eq!(pool.len(), 1);
    let before = logged.count();
    let dset = discretize(&sample, &pool, c.space(), &mut logged).unwrap();
    // identity U: only the sample's own patterns
    assert!(dset.points.iter().all(|p| p.z == sample[p.origin].x));
    assert_eq!(dset.len(), patterns(&sample, &pool.tables(), &u).len());
    let own = labeled_patterns(&sample, &pool.tables(), &u);
    assert!(own.iter().filter(|p| p.0).count() <= 2);
    assert!(own.iter().filter(|p| !p.0).count() <= 2);
    assert!(logged.count() - before <= 3 * sample.len());
}

struct Liar;

impl AttackOracle for Liar {
    fn respond(&self, _: &TruthTable, ex: LabeledExample) -> OracleResponse {
        OracleResponse::Counterexample(ex.x)
    }
}

#[test]
fn repeated_pattern_is_a_contract_violation() {
    let sc = scenario(0);
    let sample = sample_iid(&sc.dist, 4, 3);
    let (pool, _) = pool_for(&sc, &sample, 2);
    let mut logged = LoggedOracle::new(&Liar);
    let r = discretize(&sample, &pool, sc.space(), &mut logged);
    assert!(matches!(r, Err(Error::ContractViolation(_))));
}

#[test]
fn boosting_defaults() {
    assert_eq!(default_rounds(100), 516);
    let a = default_alpha(100, 516);
    assert!((a - 0.5 * (1.0 + (2.0 * 100f64.ln() / 516.0).sqrt()).ln()).abs() < 1e-12);
}

#[test]
fn end_to_end() {
    for i in 0..12 {
        let sc = scenario(i);
        let sample = sample_iid(&sc.dist, 12, i as u64);
        let f = SoaFactory::new(sc.shared.clone());
        let oracle = CanonicalOracle::new(sc.u.clone());
        let config = RluaConfig { n: Some(3), rounds: None, alpha: None, sparse: Some(9), vc_hint: 1, pass_cap: sc.lit() + 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let out = rlua_learn(&sample, sc.space(), &config, &f, &oracle, &mut rng).unwrap();
        assert!(zero_loss(out.predictor.table(), &sample, &sc.u), "scenario {i}");
        assert_eq!(out.compression.len(), out.n * out.sparse);
        assert!(out.margin >= MIN_MARGIN);
        assert!(out.boost.rounds.iter().all(|r| r.error <= WEAK_ERROR));
        assert_eq!(attack_check(&out.log, &sc.u).unwrap(), out.log.count());

        // the vote over every round is at least as good as the margin says
        let voters: Vec<TruthTable> = out.boost.rounds.iter().map(|r| *out.pool.members[r.member].table()).collect();
        for p in &out.dset.points {
            let right = voters.iter().filter(|t| t.eval(p.z) == p.y).count() as f64;
            assert!(right / voters.len() as f64 >= out.margin - 1e-12);
        }
    }
}

#[test]
fn single_point_boost_and_single_sparse_vote() {
    let c = Arc::new(make_threshold_class(4).unwrap());
    let u = PerturbationSet::identity(c.space());
    let sample = vec![LabeledExample::new(0, Label::Pos)];
    let f = SoaFactory::new(SoaShared::new(c.clone()));
    let oracle = CanonicalOracle::new(u.clone());
    let config = RluaConfig { n: Some(1), rounds: Some(1), alpha: None, sparse: Some(1), vc_hint: 1, pass_cap: 4 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = rlua_learn(&sample, c.space(), &config, &f, &oracle, &mut rng).unwrap();
    assert_eq!(out.margin, 1.0);
    assert_eq!(out.predictor.eval(0), Label::Pos);
}

#[test]
fn confidence_boosting() {
    for i in 0..4 {
        let sc = scenario(i);
        let sample = sample_iid(&sc.dist, 10, 40 + i as u64);
        let f = SoaFactory::new(sc.shared.clone());
        let oracle = CanonicalOracle::new(sc.u.clone());
        let inner = RluaConfig { n: Some(3), rounds: None, alpha: None, sparse: Some(9), vc_hint: 1, pass_cap: sc.lit() + 2 };
        let config = ConfidenceConfig { inner, weak_sample: None, rounds: Some(3), delta: 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let out = boost_confidence(&sample, sc.space(), &config, &f, &oracle, &mut rng).unwrap();
        assert!(zero_loss(out.predictor.table(), &sample, &sc.u));
        assert_eq!(out.rounds, 3);
    }
}

#[test]
fn agnostic_poisoned_example() {
    let mut checked = 0;
    for i in 0..40 {
        let sc = scenario(i);
        let mut sample = sample_iid(&sc.dist, 6, 70 + i as u64);
        // the same point with the opposite label: no row fits both copies
        let poison = LabeledExample::new(sample[0].x, sample[0].y.flip());
        sample.insert(3, poison);
        let m = sample.len();
        let opt = opt_robust_mistakes(&sc.class, &sample, &sc.u);
        if opt != 1 {
            continue;
        }
        let f = SoaFactory::new(sc.shared.clone());
        let oracle = CanonicalOracle::new(sc.u.clone());
        let inner = RluaConfig { n: Some(3), rounds: None, alpha: None, sparse: Some(9), vc_hint: 1, pass_cap: sc.lit() + 2 };
        let config = ConfidenceConfig { inner, weak_sample: None, rounds: Some(3), delta: 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let out = robustlearn::rlua::agnostic_reduce(&sample, &sc.class, &config, &f, &oracle, &mut rng).unwrap();
        assert_eq!(out.kept.len(), m - 1, "scenario {i}");
        assert!(!out.empty_fallback);
        let kept: Vec<_> = out.kept.iter().map(|&j| sample[j]).collect();
        assert!(sc.class.rows().iter().any(|r| zero_loss(r, &kept, &sc.u)));
        assert!(robust_mistakes(out.predictor.table(), &sample, &sc.u) <= opt);
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} poisoned samples had OPT 1");
}
