//! Weighted Majority with robust-loss updates, over a finite class or over
//! the family of SOA-simulating experts, and the online-to-batch conversion.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::online::SoaShared;
use crate::perturb::{robust_risk, vote_positive, AttackOracle, LoggedOracle, OracleResponse, PerturbationSet, Predictor, PredictorKind, QueryLog};
use crate::rlua::binomial;
use crate::universe::{sample_with, FiniteDistribution, HypSet, HypothesisClass, Label, LabeledExample, TruthTable};

/// Largest expert family [`make_expert_family`] will enumerate.
pub const MAX_EXPERTS: usize = 2_000_000;

/// `(a, b)` with `M <= a * OPT + b * ln N`.
pub fn regret_constants(eta: f64) -> Result<(f64, f64)> {
    check_eta(eta)?;
    let denom = (2.0 / (1.0 + eta)).ln();
    Ok(((1.0 / eta).ln() / denom, 1.0 / denom))
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid(format!("eta must lie in (0,1), got {eta}")));
    }
    Ok(())
}

/// `1 - eta = min(2 ln N / T, 1/2)`; a single expert gets 1/2.
pub fn default_eta(ln_experts: f64, horizon: usize) -> f64 {
    let gap = (2.0 * ln_experts / horizon.max(1) as f64).min(0.5);
    if gap <= 0.0 {
        0.5
    } else {
        1.0 - gap
    }
}

pub fn raw_bound(eta: f64, opt: usize, ln_experts: f64) -> Result<f64> {
    let (a, b) = regret_constants(eta)?;
    Ok(a * opt as f64 + b * ln_experts)
}

pub fn tuned_bound(opt: usize, ln_experts: f64) -> f64 {
    2.0 * opt as f64 + 4.0 * (opt as f64 * ln_experts).sqrt()
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.map(|x| (x - top).exp()).sum::<f64>().ln()
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let top = a.max(b);
    top + ((a - top).exp() + (b - top).exp()).ln()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WmResult {
    /// Rounds on which the vote was not robustly correct.
    pub mistakes: usize,
    pub rounds: usize,
    pub eta: f64,
    /// Natural log of the total weight after each mistake, starting with `ln N`.
    pub log_total: Vec<f64>,
    /// Natural log of the largest single weight at the end.
    pub log_best: f64,
    #[serde(skip)]
    pub log: QueryLog,
    /// Vote table before each round.
    #[serde(skip)]
    pub tables: Vec<TruthTable>,
}

impl WmResult {
    /// Every mistake shrank the total weight by at least `(1 + eta) / 2`.
    pub fn contraction_holds(&self) -> bool {
        let step = ((1.0 + self.eta) / 2.0).ln();
        self.log_total.windows(2).all(|w| w[1] <= w[0] + step + 1e-9)
    }
}

/// Weighted Majority over the rows of a finite class.
pub fn wm_finite(class: &HypothesisClass, stream: &[LabeledExample], eta: f64, oracle: &dyn AttackOracle) -> Result<WmResult> {
    check_eta(eta)?;
    let mut logged = LoggedOracle::new(oracle);
    let rows = class.rows();
    let mut lw = vec![0.0f64; rows.len()];
    let mut log_total = vec![(rows.len() as f64).ln()];
    let mut mistakes = 0;
    let mut tables = Vec::with_capacity(stream.len());
    let mut vote = Predictor::weighted_majority(rows, &lw);
    for ex in stream {
        tables.push(*vote.table());
        if let OracleResponse::Counterexample(z) = logged.query(&vote, *ex) {
            mistakes += 1;
            for (w, r) in lw.iter_mut().zip(rows) {
                if r.eval(z) != ex.y {
                    *w += eta.ln();
                }
            }
            log_total.push(log_sum_exp(lw.iter().copied()));
            vote = Predictor::weighted_majority(rows, &lw);
        }
    }
    let log_best = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(WmResult { mistakes, rounds: stream.len(), eta, log_total, log_best, log: logged.take_log(), tables })
}

/// An expert that runs the SOA on the counterexample sequence, negating
/// its prediction on the listed (1-based) items.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertSpec {
    pub flips: Vec<usize>,
}

/// `sum_{i <= l} C(t, i)`.
pub fn expert_family_size(l: usize, t: usize) -> f64 {
    (0..=l).map(|i| binomial(t, i)).sum()
}

/// Natural log of [`expert_family_size`], accurate for large `t`.
pub fn ln_expert_family_size(l: usize, t: usize) -> f64 {
    log_sum_exp((0..=l.min(t)).map(|i| ln_binomial(t, i)))
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// All increasing flip tuples of length `0..=l` over `1..=t`.
pub fn make_expert_family(l: usize, t: usize) -> Result<Vec<ExpertSpec>> {
    let size = expert_family_size(l, t);
    if size > MAX_EXPERTS as f64 {
        return Err(Error::ScaleCap(format!(
            "expert family for L={l}, T={t} has {size} members (cap {MAX_EXPERTS}); shrink T"
        )));
    }
    let mut out = Vec::with_capacity(size as usize);
    fn rec(start: usize, t: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<ExpertSpec>) {
        out.push(ExpertSpec { flips: cur.clone() });
        if left == 0 {
            return;
        }
        for i in start..=t {
            cur.push(i);
            rec(i + 1, t, left - 1, cur, out);
            cur.pop();
        }
    }
    rec(1, t, l, &mut Vec::new(), &mut out);
    Ok(out)
}

#[derive(Clone, Debug)]
struct ExpertState {
    version: HypSet,
    seen: usize,
}

fn expert_table(shared: &SoaShared, st: &ExpertState, flips: &[usize]) -> TruthTable {
    let t = shared.table(&st.version);
    if !st.version.is_empty() && flips.binary_search(&(st.seen + 1)).is_ok() {
        TruthTable::new(t.size(), t.negatives())
    } else {
        t
    }
}

fn advance(shared: &SoaShared, version: &HypSet, z: usize, label: Label) -> HypSet {
    if version.is_empty() {
        version.clone()
    } else {
        shared.class().restrict(version, z, label)
    }
}

/// Weighted Majority over an explicit expert family.
pub fn wm_experts(
    shared: &SoaShared,
    family: &[ExpertSpec],
    stream: &[LabeledExample],
    eta: f64,
    oracle: &dyn AttackOracle,
) -> Result<WmResult> {
    check_eta(eta)?;
    let mut logged = LoggedOracle::new(oracle);
    let all = shared.class().all();
    let mut states: Vec<ExpertState> = family.iter().map(|_| ExpertState { version: all.clone(), seen: 0 }).collect();
    let mut lw = vec![0.0f64; family.len()];
    let mut log_total = vec![(family.len() as f64).ln()];
    let mut mistakes = 0;
    let mut tables = Vec::with_capacity(stream.len());
    let mut preds: Vec<TruthTable> = states.iter().zip(family).map(|(s, e)| expert_table(shared, s, &e.flips)).collect();
    let mut vote = Predictor::weighted_majority(&preds, &lw);
    for ex in stream {
        tables.push(*vote.table());
        if let OracleResponse::Counterexample(z) = logged.query(&vote, *ex) {
            mistakes += 1;
            for ((st, w), p) in states.iter_mut().zip(lw.iter_mut()).zip(&preds) {
                let said = p.eval(z);
                if said != ex.y {
                    *w += eta.ln();
                }
                st.version = advance(shared, &st.version, z, said);
                st.seen += 1;
            }
            log_total.push(log_sum_exp(lw.iter().copied()));
            preds = states.iter().zip(family).map(|(s, e)| expert_table(shared, s, &e.flips)).collect();
            vote = Predictor::weighted_majority(&preds, &lw);
        }
    }
    let log_best = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(WmResult { mistakes, rounds: stream.len(), eta, log_total, log_best, log: logged.take_log(), tables })
}

/// Weighted Majority over the full family `{flip tuples of length <= l over 1..=t}`
/// without enumerating it.
///
/// Experts that have used the same number of flips and hold the same
/// version space behave identically from then on, and their remaining flip
/// sets range over the same subsets, so they can be merged into one
/// weighted group. The vote, the mistakes and the total weight match the
/// explicit run up to floating-point rounding.
pub fn wm_experts_aggregated(
    shared: &SoaShared,
    l: usize,
    t: usize,
    stream: &[LabeledExample],
    eta: f64,
    oracle: &dyn AttackOracle,
) -> Result<WmResult> {
    check_eta(eta)?;
    if stream.len() > t {
        return Err(Error::invalid(format!("stream of length {} exceeds horizon {t}", stream.len())));
    }
    let mut logged = LoggedOracle::new(oracle);
    let n = shared.class().space().size();
    // ln of the number of ways to place at most `r` flips among `k` items
    let ln_count = |r: usize, k: usize| ln_expert_family_size(r, k);
    let mut groups: BTreeMap<(HypSet, usize), f64> = BTreeMap::new();
    groups.insert((shared.class().all(), 0), ln_count(l, t));
    let mut log_total = vec![ln_count(l, t)];
    let mut seen = 0usize;
    let mut mistakes = 0;
    let mut tables = Vec::with_capacity(stream.len());

    let flip_share = |j: usize, seen: usize| -> f64 {
        if j >= l || seen >= t {
            return 0.0;
        }
        (ln_count(l - j - 1, t - seen - 1) - ln_count(l - j, t - seen)).exp()
    };
    let vote_of = |groups: &BTreeMap<(HypSet, usize), f64>, seen: usize| -> Predictor {
        let top = groups.values().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut plus = vec![0.0f64; n];
        let mut minus = vec![0.0f64; n];
        for ((v, j), lw) in groups {
            let w = (lw - top).exp();
            let p = if v.is_empty() { 0.0 } else { flip_share(*j, seen) };
            let base = shared.table(v);
            for x in 0..n {
                let (keep, flip) = if base.eval(x).is_pos() { (&mut plus, &mut minus) } else { (&mut minus, &mut plus) };
                keep[x] += w * (1.0 - p);
                flip[x] += w * p;
            }
        }
        let mut pos = 0u64;
        for x in 0..n {
            if vote_positive(plus[x], minus[x]) {
                pos |= 1 << x;
            }
        }
        Predictor::with_kind(TruthTable::new(n, pos), PredictorKind::WeightedMajority { members: groups.len() })
    };

    let mut vote = vote_of(&groups, seen);
    for ex in stream {
        tables.push(*vote.table());
        if let OracleResponse::Counterexample(z) = logged.query(&vote, *ex) {
            mistakes += 1;
            let mut next: BTreeMap<(HypSet, usize), f64> = BTreeMap::new();
            for ((v, j), lw) in &groups {
                let p = if v.is_empty() { 0.0 } else { flip_share(*j, seen) };
                let base = if v.is_empty() { Label::Pos } else { shared.table(v).eval(z) };
                let mut push = |said: Label, share: f64, used: usize| {
                    if share <= 0.0 {
                        return;
                    }
                    let mut w = lw + share.ln();
                    if said != ex.y {
                        w += eta.ln();
                    }
                    let key = (advance(shared, v, z, said), used);
                    let slot = next.entry(key).or_insert(f64::NEG_INFINITY);
                    *slot = log_add(*slot, w);
                };
                push(base, 1.0 - p, *j);
                push(base.flip(), p, j + 1);
            }
            groups = next;
            seen += 1;
            log_total.push(log_sum_exp(groups.values().copied()));
            vote = vote_of(&groups, seen);
        }
    }
    let log_best = groups.values().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(WmResult { mistakes, rounds: stream.len(), eta, log_total, log_best, log: logged.take_log(), tables })
}

/// Smallest `m` with `4 sqrt(ln|E_m| / m) + 2 sqrt(2 ln(1/delta) / m) <= eps`,
/// where `E_m` is the expert family for horizon `m`.
pub fn online_to_batch_sample_size(eps: f64, delta: f64, lit: usize) -> usize {
    let gap = |m: usize| {
        let mf = m as f64;
        4.0 * (ln_expert_family_size(lit, m) / mf).sqrt() + 2.0 * (2.0 * (1.0 / delta).ln() / mf).sqrt()
    };
    let mut hi = 1usize;
    while gap(hi) > eps {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if gap(mid) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OnlineToBatch {
    pub m: usize,
    /// Average robust risk of the prefix predictors.
    pub mixture_risk: f64,
    pub opt: f64,
    pub mistakes: usize,
    #[serde(skip)]
    pub log: QueryLog,
}

/// Runs the expert Weighted Majority on `m` i.i.d. draws and returns the exact
/// robust risk of the uniform mixture over its prefix predictors.
pub fn online_to_batch(
    shared: &Arc<SoaShared>,
    dist: &FiniteDistribution,
    u: &PerturbationSet,
    oracle: &dyn AttackOracle,
    m: usize,
    seed: u64,
) -> Result<OnlineToBatch> {
    if m == 0 {
        return Err(Error::invalid("online_to_batch needs m >= 1"));
    }
    let lit = shared.lit().class_lit();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = sample_with(dist, m, &mut rng);
    let eta = default_eta(ln_expert_family_size(lit, m), m);
    let run = wm_experts_aggregated(shared, lit, m, &stream, eta, oracle)?;
    let mut total = 0.0;
    let mut cache: Option<(TruthTable, f64)> = None;
    for t in &run.tables {
        let r = match cache {
            Some((ct, r)) if ct == *t => r,
            _ => {
                let r = robust_risk(t, dist, u);
                cache = Some((*t, r));
                r
            }
        };
        total += r;
    }
    let (opt, _) = crate::perturb::opt_robust_risk(shared.class(), dist, u);
    Ok(OnlineToBatch { m, mixture_risk: total / m as f64, opt, mistakes: run.mistakes, log: run.log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes() {
        assert_eq!(make_expert_family(2, 10).unwrap().len(), 56);
        assert_eq!(make_expert_family(3, 20).unwrap().len(), 1351);
        assert!((ln_expert_family_size(3, 20) - 1351f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn family_cap() {
        assert!(matches!(make_expert_family(4, 200), Err(Error::ScaleCap(_))));
    }

    #[test]
    fn eta_range() {
        assert!(regret_constants(0.0).is_err());
        assert!(regret_constants(1.0).is_err());
    }
}
