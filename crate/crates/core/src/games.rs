//! Interactive games: an online learner against a stationary attacker, the
//! threshold game behind the query lower bound, and the survivor learner
//! for imperfect attackers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::online::{OnlineLearner, Soa, SoaShared};
use crate::perturb::{AttackOracle, OracleResponse, PerturbationSet};
use crate::universe::{mask_of, sample_with, FiniteDistribution, HypothesisClass, InstanceSpace, Label, LabeledExample, TruthTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackerContract {
    /// Always returns a point of `U(x)`.
    MembershipHonest,
    Unconstrained,
}

/// A stationary attacker: its answer depends only on the predictor, the
/// example and its own randomness.
pub trait Attacker: Send + Sync {
    fn name(&self) -> String;

    fn contract(&self) -> AttackerContract;

    fn attack(&self, table: &TruthTable, ex: LabeledExample, rng: &mut dyn RngCore) -> usize;

    /// Exact distribution of the returned point.
    fn response_distribution(&self, table: &TruthTable, ex: LabeledExample) -> Vec<(usize, f64)>;

    fn is_deterministic(&self) -> bool;
}

/// Returns the clean point.
#[derive(Clone, Debug)]
pub struct IdentityAttacker;

impl Attacker for IdentityAttacker {
    fn name(&self) -> String {
        "identity".into()
    }
    fn contract(&self) -> AttackerContract {
        AttackerContract::Unconstrained
    }
    fn attack(&self, _: &TruthTable, ex: LabeledExample, _: &mut dyn RngCore) -> usize {
        ex.x
    }
    fn response_distribution(&self, _: &TruthTable, ex: LabeledExample) -> Vec<(usize, f64)> {
        vec![(ex.x, 1.0)]
    }
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// A uniformly random member of `U(x)`.
#[derive(Clone, Debug)]
pub struct UniformAttacker {
    pub u: PerturbationSet,
}

impl Attacker for UniformAttacker {
    fn name(&self) -> String {
        "uniform".into()
    }
    fn contract(&self) -> AttackerContract {
        AttackerContract::MembershipHonest
    }
    fn attack(&self, _: &TruthTable, ex: LabeledExample, rng: &mut dyn RngCore) -> usize {
        let members: Vec<usize> = self.u.members(ex.x).collect();
        members[rng.gen_range(0..members.len())]
    }
    fn response_distribution(&self, _: &TruthTable, ex: LabeledExample) -> Vec<(usize, f64)> {
        let members: Vec<usize> = self.u.members(ex.x).collect();
        let p = 1.0 / members.len() as f64;
        members.into_iter().map(|z| (z, p)).collect()
    }
    fn is_deterministic(&self) -> bool {
        false
    }
}

fn greedy_point(u: &PerturbationSet, table: &TruthTable, ex: LabeledExample) -> usize {
    let bad = u.mask(ex.x) & table.disagreements(ex.y);
    if bad != 0 {
        bad.trailing_zeros() as usize
    } else {
        u.mask(ex.x).trailing_zeros() as usize
    }
}

/// The smallest misclassified member of `U(x)`, else the smallest member.
#[derive(Clone, Debug)]
pub struct GreedyAttacker {
    pub u: PerturbationSet,
}

impl Attacker for GreedyAttacker {
    fn name(&self) -> String {
        "greedy".into()
    }
    fn contract(&self) -> AttackerContract {
        AttackerContract::MembershipHonest
    }
    fn attack(&self, table: &TruthTable, ex: LabeledExample, _: &mut dyn RngCore) -> usize {
        greedy_point(&self.u, table, ex)
    }
    fn response_distribution(&self, table: &TruthTable, ex: LabeledExample) -> Vec<(usize, f64)> {
        vec![(greedy_point(&self.u, table, ex), 1.0)]
    }
    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Greedy with probability `1 - p`; otherwise returns `x` (or the smallest
/// member of `U(x)` when `x` is not in it).
#[derive(Clone, Debug)]
pub struct BlindAttacker {
    pub u: PerturbationSet,
    pub p: f64,
}

impl BlindAttacker {
    fn blind_point(&self, ex: LabeledExample) -> usize {
        if self.u.contains_self(ex.x) {
            ex.x
        } else {
            self.u.mask(ex.x).trailing_zeros() as usize
        }
    }
}

impl Attacker for BlindAttacker {
    fn name(&self) -> String {
        format!("blind:{}", self.p)
    }
    fn contract(&self) -> AttackerContract {
        AttackerContract::MembershipHonest
    }
    fn attack(&self, table: &TruthTable, ex: LabeledExample, rng: &mut dyn RngCore) -> usize {
        if rng.gen_bool(self.p) {
            self.blind_point(ex)
        } else {
            greedy_point(&self.u, table, ex)
        }
    }
    fn response_distribution(&self, table: &TruthTable, ex: LabeledExample) -> Vec<(usize, f64)> {
        let g = greedy_point(&self.u, table, ex);
        let b = self.blind_point(ex);
        if g == b {
            vec![(g, 1.0)]
        } else {
            vec![(g, 1.0 - self.p), (b, self.p)]
        }
    }
    fn is_deterministic(&self) -> bool {
        self.p == 0.0 || self.p == 1.0
    }
}

/// Builds a shipped attacker from its name: `identity`, `uniform`, `greedy`, `blind:<p>`.
pub fn attacker_by_name(name: &str, u: &PerturbationSet) -> Result<Box<dyn Attacker>> {
    Ok(match name {
        "identity" => Box::new(IdentityAttacker),
        "uniform" => Box::new(UniformAttacker { u: u.clone() }),
        "greedy" => Box::new(GreedyAttacker { u: u.clone() }),
        other => {
            let p = other
                .strip_prefix("blind:")
                .and_then(|p| p.parse::<f64>().ok())
                .filter(|p| (0.0..=1.0).contains(p))
                .ok_or_else(|| Error::invalid(format!("unknown attacker {other:?}")))?;
            Box::new(BlindAttacker { u: u.clone(), p })
        }
    })
}

fn check_contract(attacker: &dyn Attacker, u: &PerturbationSet, ex: LabeledExample, z: usize) -> Result<()> {
    if !u.space().contains(z) {
        return Err(Error::ContractViolation(format!("attacker returned {z}, outside the space")));
    }
    if attacker.contract() == AttackerContract::MembershipHonest && !u.contains(ex.x, z) {
        return Err(Error::ContractViolation(format!("{} returned {z}, not in U({})", attacker.name(), ex.x)));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRound {
    pub x: usize,
    pub y: Label,
    pub z: usize,
    pub prediction: Label,
    pub success: bool,
    pub fingerprint: crate::perturb::Fingerprint,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GameTranscript {
    pub rounds: Vec<GameRound>,
}

impl GameTranscript {
    pub fn successes(&self) -> usize {
        self.rounds.iter().filter(|r| r.success).count()
    }
}

/// Plays `rounds` rounds: draw `(x, y)`, the attacker picks `z`, the learner
/// predicts on `z` only and is then told `(z, y)`. `pretrain` clean draws
/// are revealed first.
pub fn attack_game(
    learner: &mut dyn OnlineLearner,
    attacker: &dyn Attacker,
    dist: &FiniteDistribution,
    u: &PerturbationSet,
    rounds: usize,
    pretrain: usize,
    seed: u64,
) -> Result<GameTranscript> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ex in sample_with(dist, pretrain, &mut rng) {
        learner.observe(ex);
    }
    let mut out = GameTranscript::default();
    let mut cached: Option<(TruthTable, crate::perturb::Fingerprint)> = None;
    for _ in 0..rounds {
        let ex = sample_with(dist, 1, &mut rng)[0];
        let table = learner.table();
        let fingerprint = match cached {
            Some((t, f)) if t == table => f,
            _ => {
                let f = learner.predictor().fingerprint();
                cached = Some((table, f));
                f
            }
        };
        let z = attacker.attack(&table, ex, &mut rng);
        check_contract(attacker, u, ex, z)?;
        let prediction = table.eval(z);
        learner.observe(LabeledExample::new(z, ex.y));
        out.rounds.push(GameRound { x: ex.x, y: ex.y, z, prediction, success: prediction != ex.y, fingerprint });
    }
    Ok(out)
}

/// Exact attacker error `P[h(A(h, (x, y))) != y]`.
pub fn attacker_error_exact(table: &TruthTable, attacker: &dyn Attacker, dist: &FiniteDistribution) -> f64 {
    dist.atoms()
        .iter()
        .map(|(ex, p)| {
            let miss: f64 = attacker
                .response_distribution(table, *ex)
                .iter()
                .filter(|(z, _)| table.eval(*z) != ex.y)
                .map(|(_, q)| q)
                .sum();
            p * miss
        })
        .sum::<f64>()
        + 0.0
}

/// Monte Carlo attacker error with a 95% Hoeffding radius; exact (radius 0)
/// for deterministic attackers.
pub fn attacker_error(table: &TruthTable, attacker: &dyn Attacker, dist: &FiniteDistribution, trials: usize, seed: u64) -> (f64, f64) {
    if attacker.is_deterministic() {
        return (attacker_error_exact(table, attacker, dist), 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = sample_with(dist, trials, &mut rng);
    let errs = draws.iter().filter(|ex| table.eval(attacker.attack(table, **ex, &mut rng)) != ex.y).count();
    let radius = ((2.0f64 / 0.05).ln() / (2.0 * trials as f64)).sqrt();
    (errs as f64 / trials as f64, radius)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbStrategy {
    BinarySearch,
    Soa,
    Random,
}

impl std::str::FromStr for LbStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" | "binary-search" | "binary_search" => Ok(LbStrategy::BinarySearch),
            "soa" => Ok(LbStrategy::Soa),
            "random" => Ok(LbStrategy::Random),
            other => Err(Error::invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Threshold game on points `x_1..x_d` (indices `0..d`) plus a spare
/// point `x_0` (index `d`). The secret threshold `r` in `1..d` defines
/// `U(x_1) = {x_1..x_r}`, `U(x_d) = {x_{r+1}..x_d}` and `U(x) = {x_0}` otherwise.
#[derive(Clone, Debug)]
pub struct ThresholdGame {
    pub d: usize,
    pub secret: usize,
}

impl ThresholdGame {
    pub fn new(d: usize, secret: usize) -> Result<Self> {
        if d < 3 || d + 1 > crate::universe::MAX_INSTANCES {
            return Err(Error::invalid(format!("threshold game needs 3 <= d <= 63, got {d}")));
        }
        if secret == 0 || secret >= d {
            return Err(Error::invalid("secret must lie in 1..d"));
        }
        Ok(Self { d, secret })
    }

    pub fn space(&self) -> InstanceSpace {
        InstanceSpace::new(self.d + 1).expect("d checked")
    }

    /// `h_r`: positive exactly on `x_1..x_r`.
    pub fn threshold(&self, r: usize) -> TruthTable {
        TruthTable::new(self.d + 1, mask_of(r))
    }

    pub fn perturbation(&self) -> PerturbationSet {
        let d = self.d;
        let masks = (0..=d)
            .map(|x| match x {
                0 => mask_of(self.secret),
                _ if x == d - 1 => mask_of(d) & !mask_of(self.secret),
                _ => 1u64 << d,
            })
            .collect();
        PerturbationSet::from_masks(self.space(), masks).expect("valid sets")
    }

    pub fn distribution(&self) -> FiniteDistribution {
        FiniteDistribution::uniform(&[LabeledExample::new(0, Label::Pos), LabeledExample::new(self.d - 1, Label::Neg)])
            .expect("two atoms")
    }

    /// Exact robust risk under the uniform distribution on `(x_1, +1)`, `(x_d, -1)`.
    pub fn robust_risk(&self, table: &TruthTable) -> f64 {
        let left = mask_of(self.secret);
        let right = mask_of(self.d) & !left;
        0.5 * ((table.negatives() & left != 0) as u8 as f64) + 0.5 * ((table.positives() & right != 0) as u8 as f64)
    }
}

impl AttackOracle for ThresholdGame {
    fn respond(&self, table: &TruthTable, ex: LabeledExample) -> OracleResponse {
        let d = self.d;
        let hit = |z: usize| table.eval(z) != ex.y;
        let found = if ex.x == 0 {
            (0..self.secret).find(|&z| hit(z))
        } else if ex.x == d - 1 {
            (self.secret..d).rev().find(|&z| hit(z))
        } else if hit(d) {
            Some(d)
        } else {
            None
        };
        match found {
            Some(z) => OracleResponse::Counterexample(z),
            None => OracleResponse::RobustlyCorrect,
        }
    }
}

trait LbLearner {
    fn query(&mut self, rng: &mut ChaCha8Rng) -> (TruthTable, LabeledExample);
    fn observe(&mut self, ex: LabeledExample, response: OracleResponse);
    fn output(&self) -> TruthTable;
}

/// Tracks the interval `[lo, hi]` of thresholds consistent with the
/// answers to queries `(h_k, (x_1, +1))`.
struct IntervalLearner {
    d: usize,
    lo: usize,
    hi: usize,
    random: bool,
    last_k: usize,
}

impl LbLearner for IntervalLearner {
    fn query(&mut self, rng: &mut ChaCha8Rng) -> (TruthTable, LabeledExample) {
        let k = if self.lo >= self.hi {
            self.lo
        } else if self.random {
            rng.gen_range(self.lo..self.hi)
        } else {
            (self.lo + self.hi) / 2
        };
        self.last_k = k;
        (TruthTable::new(self.d + 1, mask_of(k)), LabeledExample::new(0, Label::Pos))
    }

    fn observe(&mut self, _: LabeledExample, response: OracleResponse) {
        match response {
            OracleResponse::RobustlyCorrect => self.hi = self.hi.min(self.last_k),
            OracleResponse::Counterexample(_) => self.lo = self.lo.max(self.last_k + 1),
        }
    }

    fn output(&self) -> TruthTable {
        TruthTable::new(self.d + 1, mask_of(self.lo))
    }
}

/// Queries the SOA over `{h_1, ..., h_{d-1}}` at the two endpoints in turn.
struct SoaLearner {
    soa: Soa,
    d: usize,
    turn: usize,
}

impl LbLearner for SoaLearner {
    fn query(&mut self, _: &mut ChaCha8Rng) -> (TruthTable, LabeledExample) {
        let ex = if self.turn.is_multiple_of(2) {
            LabeledExample::new(0, Label::Pos)
        } else {
            LabeledExample::new(self.d - 1, Label::Neg)
        };
        self.turn += 1;
        (self.soa.table(), ex)
    }

    fn observe(&mut self, ex: LabeledExample, response: OracleResponse) {
        if let OracleResponse::Counterexample(z) = response {
            self.soa.observe(LabeledExample::new(z, ex.y));
        }
    }

    fn output(&self) -> TruthTable {
        self.soa.table()
    }
}

/// The threshold class `{h_1, ..., h_{d-1}}` on the `d + 1` game points.
pub fn game_class(d: usize) -> Result<HypothesisClass> {
    let space = InstanceSpace::new(d + 1)?;
    HypothesisClass::new(space, (1..d).map(|r| TruthTable::new(d + 1, mask_of(r))).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundOutcome {
    pub d: usize,
    pub secret: usize,
    pub queries: usize,
    /// Number of thresholds consistent with all answers, before and after each query.
    pub version_sizes: Vec<usize>,
}

impl LowerBoundOutcome {
    pub fn contractions(&self) -> Vec<f64> {
        self.version_sizes.windows(2).map(|w| w[1] as f64 / w[0] as f64).collect()
    }
}

/// Plays one threshold game with a uniformly drawn secret until the
/// learner's output has zero robust risk.
pub fn threshold_lower_bound_game(strategy: LbStrategy, d: usize, seed: u64, shared: Option<&std::sync::Arc<SoaShared>>) -> Result<LowerBoundOutcome> {
    if d < 3 {
        return Err(Error::invalid(format!("threshold game needs d >= 3, got {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let secret = rng.gen_range(1..d);
    let game = ThresholdGame::new(d, secret)?;
    let mut learner: Box<dyn LbLearner> = match strategy {
        LbStrategy::BinarySearch | LbStrategy::Random => Box::new(IntervalLearner {
            d,
            lo: 1,
            hi: d - 1,
            random: strategy == LbStrategy::Random,
            last_k: 0,
        }),
        LbStrategy::Soa => {
            let shared = match shared {
                Some(s) => s.clone(),
                None => SoaShared::new(std::sync::Arc::new(game_class(d)?)),
            };
            Box::new(SoaLearner { soa: Soa::new(shared), d, turn: 0 })
        }
    };
    let mut consistent: Vec<usize> = (1..d).collect();
    let mut sizes = vec![consistent.len()];
    let cap = 4 * d;
    let mut queries = 0;
    while game.robust_risk(&learner.output()) > 0.0 {
        if queries >= cap {
            return Err(Error::NonTerminating { cap });
        }
        let (table, ex) = learner.query(&mut rng);
        let response = game.respond(&table, ex);
        queries += 1;
        consistent.retain(|&r| ThresholdGame { d, secret: r }.respond(&table, ex) == response);
        sizes.push(consistent.len());
        learner.observe(ex, response);
    }
    Ok(LowerBoundOutcome { d, secret, queries, version_sizes: sizes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivorOutcome {
    pub table: TruthTable,
    pub rounds: usize,
    pub updates: usize,
    pub streak: usize,
    pub cap: usize,
}

/// Required survival streak `ceil((1/eps) ln((L+1)/delta))`.
pub fn survivor_streak(eps: f64, delta: f64, lit: usize) -> usize {
    ((1.0 / eps) * ((lit as f64 + 1.0) / delta).ln()).ceil() as usize
}

/// Round cap `ceil(2 (L/eps) ln((L+1)/delta)) + streak`.
pub fn survivor_cap(eps: f64, delta: f64, lit: usize) -> usize {
    (2.0 * (lit as f64 / eps) * ((lit as f64 + 1.0) / delta).ln()).ceil() as usize + survivor_streak(eps, delta, lit)
}

/// Feeds fresh draws to a conservative learner through the attacker and
/// stops once its current predictor survives a full streak of attacks.
#[allow(clippy::too_many_arguments)]
pub fn survivor_learn(
    learner: &mut dyn OnlineLearner,
    attacker: &dyn Attacker,
    dist: &FiniteDistribution,
    u: &PerturbationSet,
    eps: f64,
    delta: f64,
    lit: usize,
    seed: u64,
) -> Result<SurvivorOutcome> {
    if !(eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("eps and delta must lie in (0,1)"));
    }
    if !learner.is_conservative() {
        return Err(Error::invalid("survivor learner needs a conservative online learner"));
    }
    let streak = survivor_streak(eps, delta, lit);
    let cap = survivor_cap(eps, delta, lit);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = 0;
    let mut updates = 0;
    for round in 1..=cap {
        let ex = sample_with(dist, 1, &mut rng)[0];
        let table = learner.table();
        let z = attacker.attack(&table, ex, &mut rng);
        check_contract(attacker, u, ex, z)?;
        if table.eval(z) != ex.y {
            learner.observe(LabeledExample::new(z, ex.y));
            updates += 1;
            run = 0;
        } else {
            run += 1;
            if run >= streak {
                return Ok(SurvivorOutcome { table, rounds: round, updates, streak, cap });
            }
        }
    }
    Err(Error::SurvivorFailure { cap })
}
