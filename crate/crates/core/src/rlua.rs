//! Robust learning with an attack oracle for classes of finite Littlestone
//! dimension: a pool of CycleRobust outputs, a discretized inflated sample,
//! alpha-boosting over it, and sparsification to a short majority vote.
//! Also the confidence-boosting wrapper and the agnostic reduction.

use std::collections::{HashMap, HashSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compress::{cycle_robust_logged, CompressionRecord};
use crate::error::{Error, Result};
use crate::online::LearnerFactory;
use crate::perturb::{AttackOracle, LoggedOracle, OracleResponse, Predictor, PredictorKind, QueryLog};
use crate::universe::{dual_vc_dimension, HypothesisClass, InstanceSpace, Label, LabeledExample, TruthTable};

/// Largest number of subsets `build_pool` will enumerate.
pub const MAX_POOL_SUBSETS: usize = 1_000_000;

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// CycleRobust outputs on every `n`-subset of the sample, deduplicated by truth table.
#[derive(Clone, Debug)]
pub struct Pool {
    pub members: Vec<Predictor>,
    /// Sorted sample indices of each subset, mapped to its member.
    pub by_subset: HashMap<Vec<usize>, usize>,
    /// Compression set of each member as first produced.
    pub records: Vec<CompressionRecord>,
    pub n: usize,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn tables(&self) -> Vec<TruthTable> {
        self.members.iter().map(|p| *p.table()).collect()
    }

    /// The members as a hypothesis class over `space`.
    pub fn as_class(&self, space: InstanceSpace) -> Result<HypothesisClass> {
        HypothesisClass::new(space, self.tables())
    }

    pub fn member_for(&self, subset: &[usize]) -> Option<usize> {
        self.by_subset.get(subset).copied()
    }
}

/// Visits `n`-subsets of `0..m` in lexicographic order until `f` returns true.
fn for_each_subset(m: usize, n: usize, mut f: impl FnMut(&[usize]) -> Result<bool>) -> Result<()> {
    if n > m {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        if f(&idx)? {
            return Ok(());
        }
        let mut i = n;
        while i > 0 && idx[i - 1] == m - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return Ok(());
        }
        idx[i - 1] += 1;
        for j in i..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn build_pool(
    sample: &[LabeledExample],
    n: usize,
    factory: &dyn LearnerFactory,
    oracle: &mut LoggedOracle<'_>,
    pass_cap: usize,
) -> Result<Pool> {
    let m = sample.len();
    if n == 0 || n > m {
        return Err(Error::invalid(format!("pool subset size {n} must be in 1..={m}")));
    }
    let subsets = binomial(m, n);
    if subsets > MAX_POOL_SUBSETS as f64 {
        return Err(Error::ScaleCap(format!("C({m},{n}) = {subsets} subsets exceeds {MAX_POOL_SUBSETS}")));
    }
    let mut members = Vec::new();
    let mut records = Vec::new();
    let mut by_table: HashMap<TruthTable, usize> = HashMap::new();
    let mut by_subset = HashMap::new();
    for_each_subset(m, n, |idx| {
        let sub: Vec<LabeledExample> = idx.iter().map(|&i| sample[i]).collect();
        let (pred, mut rec, _) = cycle_robust_logged(&sub, factory, oracle, pass_cap)?;
        for p in &mut rec.points {
            p.origin = idx[p.origin];
        }
        let id = *by_table.entry(*pred.table()).or_insert_with(|| {
            members.push(pred);
            records.push(rec);
            members.len() - 1
        });
        by_subset.insert(idx.to_vec(), id);
        Ok(false)
    })?;
    Ok(Pool { members, by_subset, records, n })
}

/// Bitset over pool members.
type Pattern = Vec<u64>;

/// For each instance, the pool members that label it negative.
struct PatternTable {
    neg: Vec<Pattern>,
    len: usize,
}

impl PatternTable {
    fn new(pool: &Pool, space: usize) -> Self {
        let words = pool.len().div_ceil(64).max(1);
        let mut neg = vec![vec![0u64; words]; space];
        for (j, p) in pool.members.iter().enumerate() {
            for (x, row) in neg.iter_mut().enumerate() {
                if !p.eval(x).is_pos() {
                    row[j / 64] |= 1 << (j % 64);
                }
            }
        }
        Self { neg, len: pool.len() }
    }

    /// Members that misclassify `(z, y)`.
    fn pattern(&self, z: usize, y: Label) -> Pattern {
        if y == Label::Pos {
            self.neg[z].clone()
        } else {
            let mut p: Pattern = self.neg[z].iter().map(|w| !w).collect();
            let tail = self.len % 64;
            if tail != 0 {
                *p.last_mut().unwrap() &= (1u64 << tail) - 1;
            }
            if self.len == 0 {
                p.iter_mut().for_each(|w| *w = 0);
            }
            p
        }
    }
}

/// Error pattern of `(z, y)` over `pool`: bit `j` set iff member `j` misclassifies `z`.
pub fn error_pattern(pool: &Pool, z: usize, y: Label) -> Vec<bool> {
    pool.members.iter().map(|p| p.eval(z) != y).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedPoint {
    pub z: usize,
    pub y: Label,
    pub origin: usize,
}

/// One representative of each distinct error pattern realized by the
/// perturbed sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedSet {
    pub points: Vec<DiscretizedPoint>,
}

impl DiscretizedSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn pattern_predictor(pt: &PatternTable, patterns: &HashSet<Pattern>, y: Label, space: usize) -> Predictor {
    let mut pos = 0u64;
    for x in 0..space {
        let label = if patterns.contains(&pt.pattern(x, y)) { y } else { y.flip() };
        if label.is_pos() {
            pos |= 1 << x;
        }
    }
    Predictor::with_kind(TruthTable::new(space, pos), PredictorKind::PatternPredictor { label: y, patterns: patterns.len() })
}

/// Recovers every error pattern realized in `U(x)` for each training point
/// using only oracle queries.
///
/// The query predictor labels `y` exactly the points whose pattern is
/// already known, so each counterexample reveals a new pattern. The
/// training point's own pattern seeds the search; one final query decides
/// whether that pattern is realized inside `U(x)`.
pub fn discretize(sample: &[LabeledExample], pool: &Pool, space: InstanceSpace, oracle: &mut LoggedOracle<'_>) -> Result<DiscretizedSet> {
    let pt = PatternTable::new(pool, space.size());
    let mut seen: HashSet<Pattern> = HashSet::new();
    let mut out = DiscretizedSet::default();
    for (i, ex) in sample.iter().enumerate() {
        let own = pt.pattern(ex.x, ex.y);
        let mut known: HashSet<Pattern> = HashSet::from([own.clone()]);
        let mut found: Vec<(usize, Pattern)> = Vec::new();
        loop {
            let f = pattern_predictor(&pt, &known, ex.y, space.size());
            match oracle.query(&f, *ex) {
                OracleResponse::RobustlyCorrect => break,
                OracleResponse::Counterexample(z) => {
                    let p = pt.pattern(z, ex.y);
                    if !known.insert(p.clone()) {
                        return Err(Error::ContractViolation(format!(
                            "oracle returned {z} whose pattern is already covered for example {i}"
                        )));
                    }
                    found.push((z, p));
                }
            }
        }
        if !found.iter().any(|(_, p)| *p == own) {
            known.remove(&own);
            let f = pattern_predictor(&pt, &known, ex.y, space.size());
            if let OracleResponse::Counterexample(z) = oracle.query(&f, *ex) {
                let p = pt.pattern(z, ex.y);
                if p != own {
                    return Err(Error::ContractViolation(format!("completion query for example {i} returned an unknown pattern")));
                }
                found.push((z, p));
            }
        }
        for (z, p) in found {
            if seen.insert(p) {
                out.points.push(DiscretizedPoint { z, y: ex.y, origin: i });
            }
        }
    }
    Ok(out)
}

/// Distinct error patterns of the perturbed sample, by exhaustive scan of every `U(x)`.
pub fn brute_force_patterns(
    sample: &[LabeledExample],
    pool: &Pool,
    u: &crate::perturb::PerturbationSet,
) -> HashSet<Vec<bool>> {
    let mut out = HashSet::new();
    for ex in sample {
        for z in u.members(ex.x) {
            out.insert(error_pattern(pool, z, ex.y));
        }
    }
    out
}

/// Sauer bound on distinct patterns of one label: `sum_{i<=d} C(p, i)`.
pub fn sauer_count(pool_size: usize, d: usize) -> f64 {
    (0..=d).map(|i| binomial(pool_size, i)).sum()
}

/// `(e p / d)^d`, the closed-form envelope of [`sauer_count`] (1 when `d = 0`).
pub fn sauer_envelope(pool_size: usize, d: usize) -> f64 {
    if d == 0 {
        1.0
    } else {
        (std::f64::consts::E * pool_size as f64 / d as f64).powi(d as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    /// Sorted sample indices the weak predictor was trained on.
    pub subset: Vec<usize>,
    pub member: usize,
    pub error: f64,
    pub redraws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostRun {
    pub rounds: Vec<BoostRound>,
    pub alpha: f64,
    /// Smallest fraction of rounds voting correctly on a discretized point.
    pub margin: f64,
}

/// Default number of boosting rounds for a set of size `size`.
pub fn default_rounds(size: usize) -> usize {
    ((112.0 * (size.max(1) as f64).ln()).ceil() as usize).max(1)
}

pub fn default_alpha(size: usize, rounds: usize) -> f64 {
    let lm = (size.max(1) as f64).ln();
    0.5 * (1.0 + (2.0 * lm / rounds as f64).sqrt()).ln()
}

pub const WEAK_ERROR: f64 = 1.0 / 3.0;
pub const MIN_MARGIN: f64 = 5.0 / 9.0;
const MAX_REDRAWS: usize = 100;

/// Maps a draw of discretized points to an `n`-subset of the sample: the
/// distinct origins, padded with the smallest unused indices so the subset
/// is always one the pool was built on.
fn project_to_subset(origins: impl Iterator<Item = usize>, n: usize, m: usize) -> Vec<usize> {
    let mut set: Vec<usize> = origins.collect();
    set.sort_unstable();
    set.dedup();
    let mut cand = 0;
    while set.len() < n && cand < m {
        if !set.contains(&cand) {
            set.push(cand);
        }
        cand += 1;
    }
    set.sort_unstable();
    set
}

pub fn alpha_boost<R: Rng + ?Sized>(
    dset: &DiscretizedSet,
    pool: &Pool,
    sample_len: usize,
    rounds: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<BoostRun> {
    if dset.is_empty() {
        return Err(Error::invalid("cannot boost over an empty discretized set"));
    }
    let k = dset.len();
    let mut w = vec![1.0 / k as f64; k];
    let mut out = Vec::with_capacity(rounds);
    let mut votes = vec![0usize; k];
    let shrink = (-2.0 * alpha).exp();
    for t in 0..rounds {
        let sampler = WeightedIndex::new(&w).map_err(|e| Error::BoostFailure(e.to_string()))?;
        let mut accepted = None;
        for redraw in 0..MAX_REDRAWS {
            let draws: Vec<usize> = (0..pool.n).map(|_| sampler.sample(rng)).collect();
            let subset = project_to_subset(draws.iter().map(|&j| dset.points[j].origin), pool.n, sample_len);
            let member = pool
                .member_for(&subset)
                .ok_or_else(|| Error::BoostFailure(format!("subset {subset:?} not in pool")))?;
            let f = &pool.members[member];
            let err: f64 = dset.points.iter().zip(&w).filter(|(p, _)| f.eval(p.z) != p.y).map(|(_, wi)| wi).sum();
            if err <= WEAK_ERROR {
                accepted = Some(BoostRound { subset, member, error: err, redraws: redraw });
                break;
            }
        }
        let round = accepted.ok_or_else(|| Error::BoostFailure(format!("round {t}: no weak predictor within {MAX_REDRAWS} draws")))?;
        let f = &pool.members[round.member];
        for (j, p) in dset.points.iter().enumerate() {
            if f.eval(p.z) == p.y {
                w[j] *= shrink;
                votes[j] += 1;
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        out.push(round);
    }
    let margin = votes.iter().map(|&v| v as f64 / rounds as f64).fold(f64::INFINITY, f64::min);
    if margin < MIN_MARGIN {
        return Err(Error::BoostFailure(format!("final margin {margin:.4} below 5/9")));
    }
    Ok(BoostRun { rounds: out, alpha, margin })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sparsified {
    /// Boosting rounds (zero-based) chosen for the vote, with repetition.
    pub picks: Vec<usize>,
    pub attempts: usize,
}

/// Default vote size: enough draws for a 1/18-approximation of the vote
/// with probability 2/3 over a dual class of VC dimension `dual_vc`.
pub fn default_sparse_size(dual_vc: usize) -> usize {
    let n = (18.0f64.powi(2) * (dual_vc as f64 + 3f64.ln())).ceil() as usize;
    let n = n.max(9);
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

pub const MAX_SPARSIFY_ATTEMPTS: usize = 200;

/// Draws `size` rounds uniformly and keeps the first vote with zero
/// empirical robust loss on the sample, as certified by the oracle.
pub fn sparsify<R: Rng + ?Sized>(
    run: &BoostRun,
    pool: &Pool,
    size: usize,
    sample: &[LabeledExample],
    oracle: &mut LoggedOracle<'_>,
    rng: &mut R,
) -> Result<(Predictor, Sparsified)> {
    if run.rounds.is_empty() || size == 0 {
        return Err(Error::invalid("sparsify needs rounds and a positive size"));
    }
    for attempt in 1..=MAX_SPARSIFY_ATTEMPTS {
        let picks: Vec<usize> = (0..size).map(|_| rng.gen_range(0..run.rounds.len())).collect();
        let voters: Vec<TruthTable> = picks.iter().map(|&t| *pool.members[run.rounds[t].member].table()).collect();
        let maj = Predictor::majority(&voters);
        let mut clean = true;
        for ex in sample {
            if oracle.query(&maj, *ex) != OracleResponse::RobustlyCorrect {
                clean = false;
                break;
            }
        }
        if clean {
            return Ok((maj, Sparsified { picks, attempts: attempt }));
        }
    }
    Err(Error::SparsifyFailure { attempts: MAX_SPARSIFY_ATTEMPTS })
}

/// Knobs for [`rlua_learn`]; `None` picks the default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RluaConfig {
    /// Subset size for the pool.
    pub n: Option<usize>,
    pub rounds: Option<usize>,
    pub alpha: Option<f64>,
    /// Number of rounds in the sparsified vote.
    pub sparse: Option<usize>,
    /// VC dimension used for the default subset size.
    pub vc_hint: usize,
    pub pass_cap: usize,
}

impl RluaConfig {
    pub fn subset_size(&self, m: usize) -> usize {
        self.n.unwrap_or((3 * self.vc_hint).max(5)).min(m).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct RluaOutput {
    pub predictor: Predictor,
    pub pool_size: usize,
    pub pool_dual_vc: usize,
    pub dset_size: usize,
    pub n: usize,
    pub rounds: usize,
    pub alpha: f64,
    pub sparse: usize,
    pub margin: f64,
    /// Sample indices the final vote depends on (with repetition), `n * sparse` long.
    pub compression: Vec<usize>,
    pub log: QueryLog,
    pub pool: Pool,
    pub dset: DiscretizedSet,
    pub boost: BoostRun,
}

pub fn rlua_learn<R: Rng + ?Sized>(
    sample: &[LabeledExample],
    space: InstanceSpace,
    config: &RluaConfig,
    factory: &dyn LearnerFactory,
    oracle: &dyn AttackOracle,
    rng: &mut R,
) -> Result<RluaOutput> {
    if sample.is_empty() {
        return Err(Error::invalid("rlua needs a nonempty sample"));
    }
    let mut logged = LoggedOracle::new(oracle);
    let n = config.subset_size(sample.len());
    let pool = build_pool(sample, n, factory, &mut logged, config.pass_cap)?;
    let pool_dual_vc = dual_vc_dimension(&pool.as_class(space)?);
    let dset = discretize(sample, &pool, space, &mut logged)?;
    let rounds = config.rounds.unwrap_or_else(|| default_rounds(dset.len()));
    let alpha = config.alpha.unwrap_or_else(|| default_alpha(dset.len(), rounds));
    let boost = alpha_boost(&dset, &pool, sample.len(), rounds, alpha, rng)?;
    let sparse = config.sparse.unwrap_or_else(|| default_sparse_size(pool_dual_vc));
    let (predictor, sp) = sparsify(&boost, &pool, sparse, sample, &mut logged, rng)?;
    let compression = sp.picks.iter().flat_map(|&t| boost.rounds[t].subset.iter().copied()).collect();
    Ok(RluaOutput {
        predictor,
        pool_size: pool.len(),
        pool_dual_vc,
        dset_size: dset.len(),
        n,
        rounds,
        alpha,
        sparse,
        margin: boost.margin,
        compression,
        log: logged.take_log(),
        pool,
        dset,
        boost,
    })
}

/// Knobs for [`boost_confidence`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    pub inner: RluaConfig,
    /// Draws per weak-learner call; `None` uses two thirds of the sample.
    pub weak_sample: Option<usize>,
    pub rounds: Option<usize>,
    pub delta: f64,
}

#[derive(Clone, Debug)]
pub struct ConfidenceOutput {
    pub predictor: Predictor,
    pub rounds: usize,
    pub weak_attempts: usize,
    pub log: QueryLog,
}

/// Boosts the realizable learner over the training examples, reweighting by
/// robust loss as measured through the oracle.
pub fn boost_confidence<R: Rng + ?Sized>(
    sample: &[LabeledExample],
    space: InstanceSpace,
    config: &ConfidenceConfig,
    factory: &dyn LearnerFactory,
    oracle: &dyn AttackOracle,
    rng: &mut R,
) -> Result<ConfidenceOutput> {
    let m = sample.len();
    if m == 0 {
        return Err(Error::invalid("boost_confidence needs a nonempty sample"));
    }
    let mut logged = LoggedOracle::new(oracle);
    let rounds = config.rounds.unwrap_or_else(|| default_rounds(m));
    let alpha = default_alpha(m, rounds);
    let shrink = (-2.0 * alpha).exp();
    let retries = ((2.0 * rounds as f64 / config.delta).ln().ceil() as usize).max(1);
    let weak_m = config.weak_sample.unwrap_or_else(|| (2 * m).div_ceil(3)).max(1);
    let mut w = vec![1.0 / m as f64; m];
    let mut voters = Vec::with_capacity(rounds);
    let mut attempts = 0;
    for round in 0..rounds {
        let sampler = WeightedIndex::new(&w).map_err(|e| Error::ConfidenceBoostFailure { round, msg: e.to_string() })?;
        let mut accepted = None;
        for _ in 0..retries {
            attempts += 1;
            let mut idx: Vec<usize> = (0..weak_m).map(|_| sampler.sample(rng)).collect();
            idx.sort_unstable();
            idx.dedup();
            let sub: Vec<LabeledExample> = idx.iter().map(|&i| sample[i]).collect();
            let h = match rlua_learn(&sub, space, &config.inner, factory, oracle, rng) {
                Ok(out) => {
                    logged.absorb(out.log);
                    out.predictor
                }
                Err(Error::BoostFailure(_)) | Err(Error::SparsifyFailure { .. }) => continue,
                Err(e) => return Err(e),
            };
            let correct: Vec<bool> =
                sample.iter().map(|ex| logged.query(&h, *ex) == OracleResponse::RobustlyCorrect).collect();
            let err: f64 = correct.iter().zip(&w).filter(|(c, _)| !**c).map(|(_, wi)| wi).sum();
            if err <= WEAK_ERROR {
                accepted = Some((h, correct));
                break;
            }
        }
        let (h, correct) = accepted.ok_or_else(|| Error::ConfidenceBoostFailure {
            round,
            msg: format!("no weak predictor with robust error <= 1/3 in {retries} tries"),
        })?;
        for (wi, c) in w.iter_mut().zip(&correct) {
            if *c {
                *wi *= shrink;
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        voters.push(*h.table());
    }
    let maj = Predictor::majority(&voters);
    for ex in sample {
        if logged.query(&maj, *ex) != OracleResponse::RobustlyCorrect {
            return Err(Error::ConfidenceBoostFailure { round: rounds, msg: "final vote is not robustly correct".into() });
        }
    }
    Ok(ConfidenceOutput { predictor: maj, rounds, weak_attempts: attempts, log: logged.take_log() })
}

#[derive(Clone, Debug)]
pub struct AgnosticOutput {
    pub predictor: Predictor,
    /// Indices of the largest subsequence CycleRobust could fit.
    pub kept: Vec<usize>,
    pub empty_fallback: bool,
    pub subsets_tried: usize,
    pub log: QueryLog,
}

/// True iff some row of `class` is robustly correct on every example, as
/// answered by the oracle.
fn certify_realizable(sub: &[LabeledExample], class: &HypothesisClass, oracle: &mut LoggedOracle<'_>) -> bool {
    (0..class.len()).any(|r| {
        let h = Predictor::member(class, r);
        sub.iter().all(|ex| oracle.query(&h, *ex) == OracleResponse::RobustlyCorrect)
    })
}

/// Finds a largest subsequence that `class` robustly realizes (largest size
/// first, lexicographic within a size) and boosts on it.
///
/// A subsequence is screened with CycleRobust and then certified by asking
/// the oracle about the rows of `class`: the learner's output is improper,
/// so a clean CycleRobust pass alone does not prove the class fits.
pub fn agnostic_reduce<R: Rng + ?Sized>(
    sample: &[LabeledExample],
    class: &HypothesisClass,
    config: &ConfidenceConfig,
    factory: &dyn LearnerFactory,
    oracle: &dyn AttackOracle,
    rng: &mut R,
) -> Result<AgnosticOutput> {
    let m = sample.len();
    let space = class.space();
    let mut logged = LoggedOracle::new(oracle);
    let mut tried = 0;
    let mut kept: Option<Vec<usize>> = None;
    for size in (1..=m).rev() {
        for_each_subset(m, size, |idx| {
            tried += 1;
            let sub: Vec<LabeledExample> = idx.iter().map(|&i| sample[i]).collect();
            match cycle_robust_logged(&sub, factory, &mut logged, config.inner.pass_cap) {
                Ok(_) if certify_realizable(&sub, class, &mut logged) => {
                    kept = Some(idx.to_vec());
                    Ok(true)
                }
                Ok(_) => Ok(false),
                Err(Error::NonRealizable { .. }) => Ok(false),
                Err(e) => Err(e),
            }
        })?;
        if kept.is_some() {
            break;
        }
    }
    let Some(kept) = kept else {
        return Ok(AgnosticOutput {
            predictor: Predictor::lookup(TruthTable::constant(space.size(), Label::Pos)),
            kept: Vec::new(),
            empty_fallback: true,
            subsets_tried: tried,
            log: logged.take_log(),
        });
    };
    let sub: Vec<LabeledExample> = kept.iter().map(|&i| sample[i]).collect();
    let out = boost_confidence(&sub, space, config, factory, oracle, rng)?;
    logged.absorb(out.log);
    Ok(AgnosticOutput { predictor: out.predictor, kept, empty_fallback: false, subsets_tried: tried, log: logged.take_log() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(6, 3), 20.0);
        assert_eq!(binomial(40, 3), 9880.0);
        assert_eq!(binomial(3, 5), 0.0);
    }

    #[test]
    fn projection_pads_with_smallest_unused() {
        assert_eq!(project_to_subset([4, 4, 2].into_iter(), 3, 6), vec![0, 2, 4]);
        assert_eq!(project_to_subset([0, 1, 2].into_iter(), 3, 6), vec![0, 1, 2]);
        assert_eq!(project_to_subset([1, 1, 1].into_iter(), 3, 6), vec![0, 1, 2]);
    }

    #[test]
    fn rounds_default() {
        assert_eq!(default_rounds(100), 516);
        assert_eq!(default_rounds(1), 1);
    }

    #[test]
    fn sparse_default_is_odd() {
        assert_eq!(default_sparse_size(0) % 2, 1);
        assert!(default_sparse_size(2) >= 9);
    }
}
