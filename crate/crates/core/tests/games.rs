use rand::RngCore;
use robustlearn::games::*;
use robustlearn::harness::{generate_scenario, lit3_mix, ScenarioSpec};
use robustlearn::online::{OnlineLearner, Soa};
use robustlearn::perturb::*;
use robustlearn::universe::*;
use robustlearn::Error;

fn small() -> (PerturbationSet, FiniteDistribution) {
    let sp = InstanceSpace::new(3).unwrap();
    let u = PerturbationSet::new(sp, &[vec![0, 1], vec![1], vec![2, 0]]).unwrap();
    let d = FiniteDistribution::uniform(&[LabeledExample::new(0, Label::Pos), LabeledExample::new(2, Label::Neg)]).unwrap();
    (u, d)
}

#[test]
fn attacker_error_by_hand() {
    let (u, d) = small();
    // positive only on 0
    let t = TruthTable::new(3, 0b001);
    // greedy: 1 in U(0) is wrong for +1, 0 in U(2) is wrong for -1
    assert_eq!(attacker_error_exact(&t, &GreedyAttacker { u: u.clone() }, &d), 1.0);
    // uniform: half of U(0) and half of U(2) are wrong
    assert_eq!(attacker_error_exact(&t, &UniformAttacker { u: u.clone() }, &d), 0.5);
    assert_eq!(attacker_error_exact(&t, &BlindAttacker { u: u.clone(), p: 0.5 }, &d), 0.5);
    assert_eq!(attacker_error_exact(&t, &BlindAttacker { u: u.clone(), p: 1.0 }, &d), 0.0);
    assert_eq!(attacker_error_exact(&t, &IdentityAttacker, &d), 0.0);
    assert_eq!(attacker_error(&t, &GreedyAttacker { u: u.clone() }, &d, 10, 0), (1.0, 0.0));
    let (est, radius) = attacker_error(&t, &UniformAttacker { u }, &d, 20000, 1);
    assert!((est - 0.5).abs() <= radius);
}

#[test]
fn identity_attacker_is_zero_one_risk() {
    for i in 0..20 {
        let sc = generate_scenario(&ScenarioSpec::realizable(lit3_mix(i)), i as u64).unwrap();
        for r in sc.class.rows() {
            let zero_one: f64 = sc.dist.atoms().iter().filter(|(e, _)| r.eval(e.x) != e.y).map(|a| a.1).sum();
            assert!((attacker_error_exact(r, &IdentityAttacker, &sc.dist) - zero_one).abs() < 1e-12);
            // greedy finds a bad point whenever one exists
            let robust = robust_risk(r, &sc.dist, &sc.u);
            assert!((attacker_error_exact(r, &GreedyAttacker { u: sc.u.clone() }, &sc.dist) - robust).abs() < 1e-12);
        }
    }
}

#[test]
fn soa_successes_bounded_by_lit() {
    for i in 0..40 {
        let sc = generate_scenario(&ScenarioSpec::realizable(lit3_mix(i)), 300 + i as u64).unwrap();
        for name in ["identity", "uniform", "greedy", "blind:0.3"] {
            let attacker = attacker_by_name(name, &sc.u).unwrap();
            let mut learner = Soa::new(sc.shared.clone());
            let tr = attack_game(&mut learner, attacker.as_ref(), &sc.dist, &sc.u, 200, i % 3, i as u64).unwrap();
            assert_eq!(tr.rounds.len(), 200);
            assert!(tr.successes() <= sc.lit(), "scenario {i} {name}");
            assert!(!learner.exhausted());
            for r in &tr.rounds {
                assert!(name == "identity" || sc.u.contains(r.x, r.z));
                assert_eq!(r.success, r.prediction != r.y);
            }
        }
    }
}

struct Escaper;

impl Attacker for Escaper {
    fn name(&self) -> String {
        "escaper".into()
    }
    fn contract(&self) -> AttackerContract {
        AttackerContract::MembershipHonest
    }
    fn attack(&self, _: &TruthTable, ex: LabeledExample, _: &mut dyn RngCore) -> usize {
        (ex.x + 1) % 3
    }
    fn response_distribution(&self, _: &TruthTable, ex: LabeledExample) -> Vec<(usize, f64)> {
        vec![((ex.x + 1) % 3, 1.0)]
    }
    fn is_deterministic(&self) -> bool {
        true
    }
}

#[test]
fn leaving_the_perturbation_set_is_caught() {
    let (_, d) = small();
    let u = PerturbationSet::identity(InstanceSpace::new(3).unwrap());
    let class = std::sync::Arc::new(HypothesisClass::new(u.space(), vec![TruthTable::new(3, 0b001)]).unwrap());
    let mut learner = Soa::new(robustlearn::online::SoaShared::new(class));
    let r = attack_game(&mut learner, &Escaper, &d, &u, 5, 0, 0);
    assert!(matches!(r, Err(Error::ContractViolation(_))));
    let r = survivor_learn(&mut learner, &Escaper, &d, &u, 0.1, 0.1, 1, 0);
    assert!(matches!(r, Err(Error::ContractViolation(_))));
}

#[test]
fn threshold_game_structure() {
    for d in 3..12 {
        for s in 1..d {
            let g = ThresholdGame::new(d, s).unwrap();
            let u = g.perturbation();
            let (left, right) = (u.mask(0), u.mask(d - 1));
            assert_eq!(left & right, 0);
            assert_eq!(left | right, (1u64 << d) - 1);
            assert_eq!(u.mask(d), 1u64 << d);
            // only the secret threshold is robustly correct on both atoms
            for r in 1..d {
                assert_eq!(g.robust_risk(&g.threshold(r)) == 0.0, r == s);
                let oracle = CanonicalOracle::new(u.clone());
                assert!((g.robust_risk(&g.threshold(r)) - robust_risk(&g.threshold(r), &g.distribution(), &u)).abs() < 1e-12);
                for ex in [LabeledExample::new(0, Label::Pos), LabeledExample::new(d - 1, Label::Neg)] {
                    let resp = g.respond(&g.threshold(r), ex);
                    assert!(verify_response(&u, &g.threshold(r), ex, resp).is_ok());
                    assert_eq!(resp == OracleResponse::RobustlyCorrect, oracle.respond(&g.threshold(r), ex) == OracleResponse::RobustlyCorrect);
                }
            }
        }
    }
    assert!(ThresholdGame::new(2, 1).is_err());
    assert!(ThresholdGame::new(5, 5).is_err());
    assert_eq!(game_class(6).unwrap().len(), 5);
}

#[test]
fn lower_bound_games() {
    for strategy in [LbStrategy::BinarySearch, LbStrategy::Soa, LbStrategy::Random] {
        let d = 9;
        let mut total = 0;
        let reps = 400;
        for seed in 0..reps {
            let out = threshold_lower_bound_game(strategy, d, seed, None).unwrap();
            assert_eq!(out.version_sizes.len(), out.queries + 1);
            assert_eq!(out.version_sizes[0], d - 1);
            assert!(*out.version_sizes.last().unwrap() >= 1);
            assert!(out.version_sizes.windows(2).all(|w| w[1] <= w[0]));
            assert!(out.contractions().iter().all(|&c| c > 0.0 && c <= 1.0));
            assert!(out.queries <= 4 * d);
            total += out.queries;
        }
        let mean = total as f64 / reps as f64;
        assert!(mean >= 1.5, "{strategy:?}: {mean}");
    }
    // binary search needs at most ceil(log2(d-1)) queries
    for seed in 0..100 {
        assert!(threshold_lower_bound_game(LbStrategy::BinarySearch, 17, seed, None).unwrap().queries <= 4);
    }
    assert!(threshold_lower_bound_game(LbStrategy::Soa, 2, 0, None).is_err());
    assert!("binary".parse::<LbStrategy>().is_ok() && "x".parse::<LbStrategy>().is_err());
}

#[test]
fn survivor_constants() {
    assert_eq!(survivor_streak(0.1, 0.1, 3), (10.0 * 40f64.ln()).ceil() as usize);
    assert_eq!(survivor_cap(0.1, 0.1, 3), (60.0 * 40f64.ln()).ceil() as usize + survivor_streak(0.1, 0.1, 3));
}

#[test]
fn survivor_runs() {
    let mut good = 0;
    let runs = 60;
    for i in 0..runs {
        let sc = generate_scenario(&ScenarioSpec::realizable(lit3_mix(i)), 700 + i as u64).unwrap();
        let lit = sc.lit();
        let attacker = GreedyAttacker { u: sc.u.clone() };
        let mut learner = Soa::new(sc.shared.clone());
        let out = survivor_learn(&mut learner, &attacker, &sc.dist, &sc.u, 0.1, 0.1, lit, i as u64).unwrap();
        assert!(out.updates <= lit);
        assert_eq!(out.streak, survivor_streak(0.1, 0.1, lit));
        assert!(out.rounds >= out.streak && out.rounds <= out.cap);
        if attacker_error_exact(&out.table, &attacker, &sc.dist) <= 0.1 {
            good += 1;
        }
    }
    assert!(good as f64 >= 0.9 * runs as f64);
    let sc = generate_scenario(&ScenarioSpec::realizable(lit3_mix(0)), 1).unwrap();
    let mut always = Soa::new(sc.shared.clone()).always_update();
    assert!(survivor_learn(&mut always, &IdentityAttacker, &sc.dist, &sc.u, 0.1, 0.1, 3, 0).is_err());
    let mut learner = Soa::new(sc.shared.clone());
    assert!(survivor_learn(&mut learner, &IdentityAttacker, &sc.dist, &sc.u, 1.5, 0.1, 3, 0).is_err());
}
