//! Perturbation sets, predictors, robust loss, and the attack oracle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::universe::{FiniteDistribution, HypothesisClass, InstanceSpace, Label, LabeledExample, TruthTable};

/// The map `x -> U(x)`; every `U(x)` is a nonempty subset of the space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PerturbationSet {
    space: InstanceSpace,
    masks: Vec<u64>,
}

impl PerturbationSet {
    pub fn from_masks(space: InstanceSpace, masks: Vec<u64>) -> Result<Self> {
        if masks.len() != space.size() {
            return Err(Error::invalid(format!("need {} perturbation sets, got {}", space.size(), masks.len())));
        }
        for (x, &m) in masks.iter().enumerate() {
            if m == 0 {
                return Err(Error::invalid(format!("U({x}) is empty")));
            }
            if m & !space.full_mask() != 0 {
                return Err(Error::invalid(format!("U({x}) leaves the instance space")));
            }
        }
        Ok(Self { space, masks })
    }

    pub fn new(space: InstanceSpace, sets: &[Vec<usize>]) -> Result<Self> {
        let mut masks = Vec::with_capacity(sets.len());
        for (x, s) in sets.iter().enumerate() {
            let mut m = 0u64;
            for &z in s {
                if !space.contains(z) {
                    return Err(Error::invalid(format!("U({x}) contains {z}, outside the space")));
                }
                m |= 1 << z;
            }
            masks.push(m);
        }
        Self::from_masks(space, masks)
    }

    pub fn identity(space: InstanceSpace) -> Self {
        Self { space, masks: (0..space.size()).map(|x| 1u64 << x).collect() }
    }

    /// `U(x) = {x-1, x, x+1}` clipped to the space.
    pub fn neighbors(space: InstanceSpace) -> Self {
        let full = space.full_mask();
        let masks = (0..space.size())
            .map(|x| {
                let m = 1u64 << x;
                (m | m << 1 | m >> 1) & full
            })
            .collect();
        Self { space, masks }
    }

    /// Each `z != x` joins `U(x)` independently with probability `p`.
    /// With `include_self` every `x` is in its own set; otherwise an empty
    /// draw falls back to a single uniformly chosen point.
    pub fn random<R: Rng + ?Sized>(space: InstanceSpace, p: f64, include_self: bool, rng: &mut R) -> Self {
        let n = space.size();
        let masks = (0..n)
            .map(|x| {
                let mut m = if include_self { 1u64 << x } else { 0 };
                for z in 0..n {
                    if z != x && rng.gen_bool(p) {
                        m |= 1 << z;
                    }
                }
                if m == 0 {
                    m = 1 << rng.gen_range(0..n);
                }
                m
            })
            .collect();
        Self { space, masks }
    }

    pub fn space(&self) -> InstanceSpace {
        self.space
    }

    pub fn mask(&self, x: usize) -> u64 {
        self.masks[x]
    }

    /// Members of `U(x)` in ascending order.
    pub fn members(&self, x: usize) -> impl Iterator<Item = usize> {
        let mut m = self.masks[x];
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let z = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(z)
            }
        })
    }

    pub fn contains(&self, x: usize, z: usize) -> bool {
        z < self.space.size() && self.masks[x] >> z & 1 == 1
    }

    pub fn contains_self(&self, x: usize) -> bool {
        self.contains(x, x)
    }

    pub fn is_subset_of(&self, other: &PerturbationSet) -> bool {
        self.space == other.space && self.masks.iter().zip(&other.masks).all(|(a, b)| a & !b == 0)
    }

    /// Parses `instances <n>` followed by `u <x> : <z1> <z2> ...` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut space = None;
        let mut sets: Vec<Option<Vec<usize>>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix("instances") {
                let n: usize = rest.trim().parse().map_err(|_| Error::parse(ln, "bad instance count"))?;
                space = Some(InstanceSpace::new(n).map_err(|e| Error::parse(ln, e.to_string()))?);
                sets = vec![None; n];
                continue;
            }
            let sp = space.ok_or_else(|| Error::parse(ln, "`instances <n>` must come first"))?;
            let rest = l.strip_prefix("u ").ok_or_else(|| Error::parse(ln, "expected `u <x> : <z...>`"))?;
            let (lhs, rhs) = rest.split_once(':').ok_or_else(|| Error::parse(ln, "missing `:`"))?;
            let x: usize = lhs.trim().parse().map_err(|_| Error::parse(ln, "bad instance"))?;
            if !sp.contains(x) {
                return Err(Error::parse(ln, format!("instance {x} outside space")));
            }
            let zs = rhs
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| Error::parse(ln, format!("bad member {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if sets[x].replace(zs).is_some() {
                return Err(Error::parse(ln, format!("U({x}) given twice")));
            }
        }
        let space = space.ok_or_else(|| Error::parse(1, "missing `instances <n>` header"))?;
        let sets = sets
            .into_iter()
            .enumerate()
            .map(|(x, s)| s.ok_or_else(|| Error::invalid(format!("no line for U({x})"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, &sets)
    }

    pub fn format(&self) -> String {
        let mut out = format!("instances {}\n", self.space.size());
        for x in 0..self.space.size() {
            out.push_str(&format!("u {x} :"));
            for z in self.members(x) {
                out.push_str(&format!(" {z}"));
            }
            out.push('\n');
        }
        out
    }
}

/// How a predictor was produced. The truth table is always materialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    ClassMember { row: usize },
    TableLookup,
    /// Unweighted vote, ties go to +1.
    MajorityVote { voters: usize },
    /// Weighted vote, ties go to +1.
    WeightedMajority { members: usize },
    /// Discretizer predictor built from a set of error patterns.
    PatternPredictor { label: Label, patterns: usize },
    OnlineState { updates: usize },
}

/// An evaluable classifier over a finite space.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    table: TruthTable,
    kind: PredictorKind,
    fingerprint: u64,
}

impl Predictor {
    fn build(table: TruthTable, kind: PredictorKind, extra: &[f64]) -> Self {
        let (tag, a, b) = match &kind {
            PredictorKind::ClassMember { row } => (1, *row as u64, 0),
            PredictorKind::TableLookup => (2, 0, 0),
            PredictorKind::MajorityVote { voters } => (3, *voters as u64, 0),
            PredictorKind::WeightedMajority { members } => (4, *members as u64, 0),
            PredictorKind::PatternPredictor { label, patterns } => (5, label.is_pos() as u64, *patterns as u64),
            PredictorKind::OnlineState { updates } => (6, *updates as u64, 0),
        };
        let mut h = 0x5151_7e1e_a7e5_0001u64;
        for v in [tag, a, b, table.size() as u64, table.positives()] {
            h = splitmix64(h ^ v);
        }
        for w in extra {
            h = splitmix64(h ^ w.to_bits());
        }
        Self { table, kind, fingerprint: h }
    }

    pub fn member(class: &HypothesisClass, row: usize) -> Self {
        Self::build(*class.row(row), PredictorKind::ClassMember { row }, &[])
    }

    pub fn lookup(table: TruthTable) -> Self {
        Self::build(table, PredictorKind::TableLookup, &[])
    }

    pub fn majority(voters: &[TruthTable]) -> Self {
        assert!(!voters.is_empty(), "majority of nothing");
        let n = voters[0].size();
        let mut pos = 0u64;
        for x in 0..n {
            let plus = voters.iter().filter(|t| t.positives() >> x & 1 == 1).count();
            if 2 * plus >= voters.len() {
                pos |= 1 << x;
            }
        }
        Self::build(TruthTable::new(n, pos), PredictorKind::MajorityVote { voters: voters.len() }, &[])
    }

    /// Weighted vote with weights given as natural logs, so tiny weights
    /// stay comparable.
    pub fn weighted_majority(members: &[TruthTable], log_weights: &[f64]) -> Self {
        assert_eq!(members.len(), log_weights.len());
        assert!(!members.is_empty(), "weighted majority of nothing");
        let n = members[0].size();
        let top = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_weights.iter().map(|lw| (lw - top).exp()).collect();
        let mut pos = 0u64;
        for x in 0..n {
            let (mut plus, mut minus) = (0.0, 0.0);
            for (t, wi) in members.iter().zip(&w) {
                if t.positives() >> x & 1 == 1 {
                    plus += wi;
                } else {
                    minus += wi;
                }
            }
            if vote_positive(plus, minus) {
                pos |= 1 << x;
            }
        }
        Self::build(TruthTable::new(n, pos), PredictorKind::WeightedMajority { members: members.len() }, log_weights)
    }

    pub fn with_kind(table: TruthTable, kind: PredictorKind) -> Self {
        Self::build(table, kind, &[])
    }

    pub fn table(&self) -> &TruthTable {
        &self.table
    }

    pub fn kind(&self) -> &PredictorKind {
        &self.kind
    }

    pub fn eval(&self, x: usize) -> Label {
        self.table.eval(x)
    }

    /// 64-bit hash of the truth table, the construction kind and any vote weights.
    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint(self.fingerprint)
    }
}

/// Relative slack under which a weighted vote counts as tied.
pub const VOTE_TIE_TOLERANCE: f64 = 1e-9;

/// Weighted vote rule: `+1` unless the negative side wins by more than
/// rounding noise. Exact ties go to `+1` however the sums were accumulated.
pub fn vote_positive(plus: f64, minus: f64) -> bool {
    plus >= minus - VOTE_TIE_TOLERANCE * (plus + minus)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Predictor fingerprint, written as 16 hex digits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Fingerprint(pub u64);

impl std::fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map(Fingerprint).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleResponse {
    RobustlyCorrect,
    Counterexample(usize),
}

/// A perfect attack oracle: given a predictor and `(x, y)`, either certifies
/// that every `z` in `U(x)` is labeled `y` or returns one that is not.
pub trait AttackOracle: Sync {
    fn respond(&self, table: &TruthTable, ex: LabeledExample) -> OracleResponse;
}

/// Scans `U(x)` in ascending order and returns the first misclassified point.
#[derive(Clone, Debug)]
pub struct CanonicalOracle {
    u: PerturbationSet,
}

impl CanonicalOracle {
    pub fn new(u: PerturbationSet) -> Self {
        Self { u }
    }

    pub fn perturbation(&self) -> &PerturbationSet {
        &self.u
    }
}

impl AttackOracle for CanonicalOracle {
    fn respond(&self, table: &TruthTable, ex: LabeledExample) -> OracleResponse {
        let bad = self.u.mask(ex.x) & table.disagreements(ex.y);
        if bad == 0 {
            return OracleResponse::RobustlyCorrect;
        }
        let z = bad.trailing_zeros() as usize;
        assert!(self.u.contains(ex.x, z), "oracle returned a point outside U(x)");
        assert!(table.eval(z) != ex.y, "oracle returned a correctly classified point");
        OracleResponse::Counterexample(z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub fingerprint: Fingerprint,
    pub table: TruthTable,
    pub example: LabeledExample,
    pub response: OracleResponse,
}

/// Every oracle call made by a learner, in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryLog {
    records: Vec<QueryRecord>,
}

impl QueryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, rec: QueryRecord) {
        self.records.push(rec);
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    /// Number of oracle calls; always the number of records.
    pub fn count(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn extend(&mut self, other: QueryLog) {
        self.records.extend(other.records);
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, l) in text.lines().enumerate() {
            if l.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(l).map_err(|e| Error::parse(i + 1, e.to_string()))?);
        }
        Ok(Self { records })
    }
}

/// Oracle wrapper that records every call.
pub struct LoggedOracle<'a> {
    oracle: &'a dyn AttackOracle,
    log: QueryLog,
}

impl<'a> LoggedOracle<'a> {
    pub fn new(oracle: &'a dyn AttackOracle) -> Self {
        Self { oracle, log: QueryLog::new() }
    }

    pub fn query(&mut self, pred: &Predictor, ex: LabeledExample) -> OracleResponse {
        let response = self.oracle.respond(pred.table(), ex);
        self.log.push(QueryRecord { fingerprint: pred.fingerprint(), table: *pred.table(), example: ex, response });
        response
    }

    pub fn count(&self) -> usize {
        self.log.count()
    }

    pub fn log(&self) -> &QueryLog {
        &self.log
    }

    pub fn take_log(&mut self) -> QueryLog {
        std::mem::take(&mut self.log)
    }

    pub fn oracle(&self) -> &'a dyn AttackOracle {
        self.oracle
    }

    pub fn absorb(&mut self, log: QueryLog) {
        self.log.extend(log);
    }
}

/// Checks one oracle answer against `U`.
pub fn verify_response(u: &PerturbationSet, table: &TruthTable, ex: LabeledExample, response: OracleResponse) -> Result<()> {
    if !u.space().contains(ex.x) || table.size() != u.space().size() {
        return Err(Error::ContractViolation(format!("query ({}, {}) does not match the space", ex.x, ex.y)));
    }
    match response {
        OracleResponse::Counterexample(z) => {
            if !u.contains(ex.x, z) {
                return Err(Error::ContractViolation(format!("counterexample {z} is not in U({})", ex.x)));
            }
            if table.eval(z) == ex.y {
                return Err(Error::ContractViolation(format!("counterexample {z} is classified correctly")));
            }
        }
        OracleResponse::RobustlyCorrect => {
            if u.mask(ex.x) & table.disagreements(ex.y) != 0 {
                return Err(Error::ContractViolation(format!("predictor is not robustly correct on ({}, {})", ex.x, ex.y)));
            }
        }
    }
    Ok(())
}

/// Replays a query log against `U`, returning the number of verified records.
pub fn attack_check(log: &QueryLog, u: &PerturbationSet) -> Result<usize> {
    for (i, r) in log.records().iter().enumerate() {
        verify_response(u, &r.table, r.example, r.response)
            .map_err(|e| Error::ContractViolation(format!("record {i}: {e}")))?;
    }
    Ok(log.count())
}

/// 1 if some `z` in `U(x)` is labeled other than `y`.
pub fn robust_loss(table: &TruthTable, ex: LabeledExample, u: &PerturbationSet) -> u32 {
    u.members(ex.x).any(|z| table.eval(z) != ex.y) as u32
}

pub fn robust_risk(table: &TruthTable, dist: &FiniteDistribution, u: &PerturbationSet) -> f64 {
    dist.atoms().iter().map(|(e, p)| p * robust_loss(table, *e, u) as f64).sum()
}

pub fn zero_one_risk(table: &TruthTable, dist: &FiniteDistribution) -> f64 {
    dist.atoms().iter().filter(|(e, _)| table.eval(e.x) != e.y).map(|a| a.1).sum()
}

/// Smallest robust risk over the class, with the first row attaining it.
pub fn opt_robust_risk(class: &HypothesisClass, dist: &FiniteDistribution, u: &PerturbationSet) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for (i, r) in class.rows().iter().enumerate() {
        let risk = robust_risk(r, dist, u);
        if risk < best.0 {
            best = (risk, i);
        }
    }
    best
}

pub fn empirical_robust_loss(table: &TruthTable, sample: &[LabeledExample], u: &PerturbationSet) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::invalid("empirical robust loss of an empty sample"));
    }
    let errs: u32 = sample.iter().map(|e| robust_loss(table, *e, u)).sum();
    Ok(errs as f64 / sample.len() as f64)
}

/// Number of robust mistakes of `table` on `sample`.
pub fn robust_mistakes(table: &TruthTable, sample: &[LabeledExample], u: &PerturbationSet) -> usize {
    sample.iter().map(|e| robust_loss(table, *e, u) as usize).sum()
}

/// Smallest number of robust mistakes over the class.
pub fn opt_robust_mistakes(class: &HypothesisClass, sample: &[LabeledExample], u: &PerturbationSet) -> usize {
    class.rows().iter().map(|r| robust_mistakes(r, sample, u)).min().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize) -> InstanceSpace {
        InstanceSpace::new(n).unwrap()
    }

    #[test]
    fn canonical_oracle_returns_smallest_misclassified() {
        let u = PerturbationSet::new(space(6), &[vec![0], vec![1], vec![0, 2, 5, 3], vec![3], vec![4], vec![5]]).unwrap();
        let o = CanonicalOracle::new(u);
        // labels +1 on 0 and 3, -1 on 2 and 5
        let t = TruthTable::new(6, 0b001001);
        let r = o.respond(&t, LabeledExample::new(2, Label::Pos));
        assert_eq!(r, OracleResponse::Counterexample(2));
    }

    #[test]
    fn empty_set_rejected() {
        assert!(PerturbationSet::from_masks(space(2), vec![1, 0]).is_err());
    }

    #[test]
    fn format_round_trips() {
        let u = PerturbationSet::neighbors(space(5));
        assert_eq!(PerturbationSet::parse(&u.format()).unwrap(), u);
    }

    #[test]
    fn fingerprint_tracks_weights() {
        let t = [TruthTable::new(2, 0b01), TruthTable::new(2, 0b10)];
        let a = Predictor::weighted_majority(&t, &[0.0, -1.0]);
        let b = Predictor::weighted_majority(&t, &[0.0, -2.0]);
        assert_eq!(a.table(), b.table());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
