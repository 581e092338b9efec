//! Instance spaces, labels, finite hypothesis classes and their combinatorial
//! dimensions (VC, dual VC, Littlestone, threshold).
//!
//! Hypotheses and predictors over a space of at most 64 points are stored as
//! bit masks of their positive points. Version spaces are bitsets over the
//! rows of a class.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Mutex;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest instance space representable by a [`TruthTable`].
pub const MAX_INSTANCES: usize = 64;

/// Binary label in {-1, +1}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn from_sign(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            other => Err(Error::invalid(format!("label must be +1 or -1, got {other}"))),
        }
    }

    pub fn sign(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }

    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    /// Accepts `+1`, `-1`, `1`, `+`, `-`.
    pub fn parse(tok: &str) -> Option<Self> {
        match tok {
            "+1" | "1" | "+" => Some(Label::Pos),
            "-1" | "-" => Some(Label::Neg),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.is_pos() { "+1" } else { "-1" })
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.sign())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::from_sign(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InstanceSpace {
    size: usize,
}

impl InstanceSpace {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("instance space must contain at least one point"));
        }
        if size > MAX_INSTANCES {
            return Err(Error::ScaleCap(format!(
                "instance space of size {size} exceeds {MAX_INSTANCES}"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn full_mask(&self) -> u64 {
        mask_of(self.size)
    }

    pub fn contains(&self, x: usize) -> bool {
        x < self.size
    }
}

pub(crate) fn mask_of(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// A total function from the instance space to labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TruthTable {
    size: u8,
    pos: u64,
}

impl TruthTable {
    pub fn new(size: usize, positives: u64) -> Self {
        assert!((1..=MAX_INSTANCES).contains(&size), "truth table size out of range");
        Self { size: size as u8, pos: positives & mask_of(size) }
    }

    pub fn constant(size: usize, label: Label) -> Self {
        Self::new(size, if label.is_pos() { u64::MAX } else { 0 })
    }

    pub fn from_labels(labels: &[Label]) -> Self {
        let mut pos = 0u64;
        for (i, l) in labels.iter().enumerate() {
            if l.is_pos() {
                pos |= 1 << i;
            }
        }
        Self::new(labels.len(), pos)
    }

    pub fn size(&self) -> usize {
        self.size as usize
    }

    /// Bit `x` is set iff the table labels `x` positive.
    pub fn positives(&self) -> u64 {
        self.pos
    }

    pub fn negatives(&self) -> u64 {
        !self.pos & mask_of(self.size())
    }

    pub fn eval(&self, x: usize) -> Label {
        debug_assert!(x < self.size());
        Label::from_bool(self.pos >> x & 1 == 1)
    }

    /// Points the table does not label `y`.
    pub fn disagreements(&self, y: Label) -> u64 {
        if y.is_pos() {
            self.negatives()
        } else {
            self.pos
        }
    }

    pub fn to_sign_string(&self) -> String {
        (0..self.size()).map(|x| if self.pos >> x & 1 == 1 { '+' } else { '-' }).collect()
    }

    pub fn parse_sign_string(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > MAX_INSTANCES {
            return Err(Error::invalid(format!("bad truth-table length {}", s.len())));
        }
        let mut pos = 0u64;
        for (i, c) in s.chars().enumerate() {
            match c {
                '+' => pos |= 1 << i,
                '-' => {}
                other => return Err(Error::invalid(format!("unexpected character {other:?} in row"))),
            }
        }
        Ok(Self::new(s.len(), pos))
    }
}

impl Serialize for TruthTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_sign_string())
    }
}

impl<'de> Deserialize<'de> for TruthTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TruthTable::parse_sign_string(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledExample {
    pub x: usize,
    pub y: Label,
}

impl LabeledExample {
    pub fn new(x: usize, y: Label) -> Self {
        Self { x, y }
    }
}

/// Bitset over the rows of a hypothesis class.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HypSet {
    words: Box<[u64]>,
}

impl HypSet {
    pub fn empty(n: usize) -> Self {
        Self { words: vec![0u64; n.div_ceil(64).max(1)].into_boxed_slice() }
    }

    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn and(&self, other: &HypSet) -> HypSet {
        HypSet { words: self.words.iter().zip(other.words.iter()).map(|(a, b)| a & b).collect() }
    }

    pub fn and_not(&self, other: &HypSet) -> HypSet {
        HypSet { words: self.words.iter().zip(other.words.iter()).map(|(a, b)| a & !b).collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

/// A finite class of distinct hypotheses over an instance space.
#[derive(Clone, Debug)]
pub struct HypothesisClass {
    space: InstanceSpace,
    rows: Vec<TruthTable>,
    /// `positive_rows[x]` holds the rows labeling `x` positive.
    positive_rows: Vec<HypSet>,
}

impl PartialEq for HypothesisClass {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.rows == other.rows
    }
}

impl HypothesisClass {
    pub fn new(space: InstanceSpace, rows: Vec<TruthTable>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("hypothesis class must have at least one row"));
        }
        let mut seen = HashSet::new();
        for (i, r) in rows.iter().enumerate() {
            if r.size() != space.size() {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {}",
                    r.size(),
                    space.size()
                )));
            }
            if !seen.insert(r.positives()) {
                return Err(Error::invalid(format!("row {i} duplicates an earlier row")));
            }
        }
        let mut positive_rows = vec![HypSet::empty(rows.len()); space.size()];
        for (i, r) in rows.iter().enumerate() {
            for (x, set) in positive_rows.iter_mut().enumerate() {
                if r.positives() >> x & 1 == 1 {
                    set.insert(i);
                }
            }
        }
        Ok(Self { space, rows, positive_rows })
    }

    /// All `2^k` labelings of `k` points.
    pub fn full_cube(k: usize) -> Result<Self> {
        if k == 0 || k > 12 {
            return Err(Error::invalid("full cube needs 1..=12 points"));
        }
        let space = InstanceSpace::new(k)?;
        Self::new(space, (0..1u64 << k).map(|p| TruthTable::new(k, p)).collect())
    }

    pub fn space(&self) -> InstanceSpace {
        self.space
    }

    pub fn rows(&self) -> &[TruthTable] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &TruthTable {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn all(&self) -> HypSet {
        HypSet::full(self.rows.len())
    }

    /// Rows of `v` that label `x` with `y`.
    pub fn restrict(&self, v: &HypSet, x: usize, y: Label) -> HypSet {
        if y.is_pos() {
            v.and(&self.positive_rows[x])
        } else {
            v.and_not(&self.positive_rows[x])
        }
    }

    pub fn transpose(&self) -> Vec<u64> {
        assert!(self.rows.len() <= 64, "transpose only supported for at most 64 rows");
        (0..self.space.size())
            .map(|x| {
                let mut m = 0u64;
                for (i, r) in self.rows.iter().enumerate() {
                    m |= (r.positives() >> x & 1) << i;
                }
                m
            })
            .collect()
    }
}

/// Thresholds on `n` points: row `i` (1-based) is positive exactly on the first `i` points.
pub fn make_threshold_class(n: usize) -> Result<HypothesisClass> {
    if n == 0 {
        return Err(Error::invalid("threshold class needs n >= 1"));
    }
    let space = InstanceSpace::new(n)?;
    HypothesisClass::new(space, (1..=n).map(|i| TruthTable::new(n, mask_of(i))).collect())
}

fn pext(value: u64, mut mask: u64) -> u64 {
    let mut out = 0u64;
    let mut bit = 0;
    while mask != 0 {
        let b = mask.trailing_zeros();
        out |= (value >> b & 1) << bit;
        bit += 1;
        mask &= mask - 1;
    }
    out
}

fn shatters(class: &HypothesisClass, set: u64) -> bool {
    let k = set.count_ones() as usize;
    let need = 1usize << k;
    if class.len() < need {
        return false;
    }
    let mut seen = vec![false; need];
    let mut count = 0;
    for r in class.rows() {
        let p = pext(r.positives(), set) as usize;
        if !seen[p] {
            seen[p] = true;
            count += 1;
            if count == need {
                return true;
            }
        }
    }
    false
}

/// Largest size of a set of instances on which the class realizes every labeling.
pub fn vc_dimension(class: &HypothesisClass) -> usize {
    let n = class.space().size();
    let mut level: Vec<u64> = vec![0];
    let mut d = 0;
    loop {
        let prev: HashSet<u64> = level.iter().copied().collect();
        let mut next = Vec::new();
        for &s in &level {
            let start = if s == 0 { 0 } else { 64 - s.leading_zeros() as usize };
            for x in start..n {
                let t = s | 1 << x;
                // every subset must already be shattered
                let mut ok = true;
                let mut rest = s;
                while rest != 0 {
                    let b = rest & rest.wrapping_neg();
                    if !prev.contains(&(t & !b)) {
                        ok = false;
                        break;
                    }
                    rest &= rest - 1;
                }
                if ok && shatters(class, t) {
                    next.push(t);
                }
            }
        }
        if next.is_empty() {
            return d;
        }
        d += 1;
        level = next;
    }
}

fn combinations(n: usize, k: usize, mut f: impl FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if f(&idx) {
            return;
        }
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn halving_chain(patterns: &[u64], cells: &mut Vec<u64>, from: usize, remaining: usize) -> bool {
    if remaining == 0 {
        return true;
    }
    for (i, &p) in patterns.iter().enumerate().skip(from) {
        if cells.iter().all(|&c| (c & p).count_ones() * 2 == c.count_ones()) {
            let saved = cells.clone();
            let mut next = Vec::with_capacity(cells.len() * 2);
            for &c in cells.iter() {
                next.push(c & p);
                next.push(c & !p);
            }
            *cells = next;
            if halving_chain(patterns, cells, i + 1, remaining - 1) {
                return true;
            }
            *cells = saved;
        }
    }
    false
}

/// VC dimension of the transposed matrix: the largest set of hypotheses on
/// which the instances realize every sign pattern.
pub fn dual_vc_dimension(class: &HypothesisClass) -> usize {
    let n = class.space().size();
    let mut d = 0;
    let mut k = 1;
    while (1usize << k) <= n && (k as u32) < usize::BITS && k <= class.len() {
        let width = 1usize << k;
        let mut found = false;
        combinations(n, width, |inst| {
            let mut seen = HashSet::new();
            let mut pats = Vec::new();
            for r in class.rows() {
                let mut p = 0u64;
                for (b, &x) in inst.iter().enumerate() {
                    p |= (r.positives() >> x & 1) << b;
                }
                if seen.insert(p) {
                    pats.push(p);
                }
            }
            let mut cells = vec![mask_of(width)];
            found = halving_chain(&pats, &mut cells, 0, k);
            found
        });
        if !found {
            break;
        }
        d = k;
        k += 1;
    }
    d
}

/// Memoized Littlestone dimension of version spaces of one class.
///
/// The memo is keyed by the version-space bitset and is shared behind a
/// mutex, so one instance can serve many learners across threads.
#[derive(Debug)]
pub struct LitOracle {
    class: std::sync::Arc<HypothesisClass>,
    memo: Mutex<HashMap<HypSet, i32>>,
}

impl LitOracle {
    pub fn new(class: std::sync::Arc<HypothesisClass>) -> Self {
        Self { class, memo: Mutex::new(HashMap::new()) }
    }

    pub fn class(&self) -> &HypothesisClass {
        &self.class
    }

    pub fn class_arc(&self) -> std::sync::Arc<HypothesisClass> {
        self.class.clone()
    }

    /// Littlestone dimension of `v`; the empty set has dimension -1.
    pub fn lit(&self, v: &HypSet) -> i32 {
        let size = v.len();
        if size == 0 {
            return -1;
        }
        if size == 1 {
            return 0;
        }
        if let Some(&d) = self.memo.lock().unwrap().get(v) {
            return d;
        }
        let cap = (usize::BITS - 1 - size.leading_zeros()) as i32;
        let mut best = 0;
        for x in 0..self.class.space().size() {
            let a = self.class.restrict(v, x, Label::Pos);
            let na = a.len();
            if na == 0 || na == size {
                continue;
            }
            let b = v.and_not(&a);
            let (small, large) = if na <= size - na { (a, b) } else { (b, a) };
            // 1 + lit(small) bounds this split from above
            let small_cap = (usize::BITS - 1 - small.len().leading_zeros()) as i32;
            if small_cap < best {
                continue;
            }
            let ls = self.lit(&small);
            if ls < best {
                continue;
            }
            let ll = self.lit(&large);
            best = best.max(1 + ls.min(ll));
            if best == cap {
                break;
            }
        }
        self.memo.lock().unwrap().insert(v.clone(), best);
        best
    }

    pub fn class_lit(&self) -> usize {
        self.lit(&self.class.all()) as usize
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }
}

pub fn littlestone_dimension(class: &HypothesisClass) -> usize {
    LitOracle::new(std::sync::Arc::new(class.clone())).class_lit()
}

/// Largest `k` with points `x_1..x_k` and rows `h_1..h_k` such that
/// `h_i(x_j) = +1` iff `j <= i`.
pub fn threshold_dimension(class: &HypothesisClass) -> usize {
    let n = class.space().size();
    let bound = n.min(class.len());
    let mut best = 0;
    let mut cands: Vec<HypSet> = Vec::new();
    tdim_search(class, 0, &mut cands, &mut best, bound);
    best
}

fn tdim_search(class: &HypothesisClass, used: u64, cands: &mut Vec<HypSet>, best: &mut usize, bound: usize) {
    let k = cands.len();
    if k > *best {
        *best = k;
    }
    if *best >= bound {
        return;
    }
    let n = class.space().size();
    let free = n - used.count_ones() as usize;
    if k + free <= *best {
        return;
    }
    for x in 0..n {
        if used >> x & 1 == 1 {
            continue;
        }
        let top = match cands.last() {
            Some(c) => class.restrict(c, x, Label::Pos),
            None => class.restrict(&class.all(), x, Label::Pos),
        };
        if top.is_empty() {
            continue;
        }
        let mut next: Vec<HypSet> = Vec::with_capacity(k + 1);
        let mut ok = true;
        for c in cands.iter() {
            let r = class.restrict(c, x, Label::Neg);
            if r.is_empty() {
                ok = false;
                break;
            }
            next.push(r);
        }
        if !ok {
            continue;
        }
        next.push(top);
        let mut saved = std::mem::replace(cands, next);
        tdim_search(class, used | 1 << x, cands, best, bound);
        std::mem::swap(cands, &mut saved);
        if *best >= bound {
            return;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub vc: usize,
    pub dual_vc: usize,
    pub littlestone: usize,
    pub threshold: usize,
}

pub fn dimension_report(class: &HypothesisClass) -> DimensionReport {
    DimensionReport {
        vc: vc_dimension(class),
        dual_vc: dual_vc_dimension(class),
        littlestone: littlestone_dimension(class),
        threshold: threshold_dimension(class),
    }
}

/// Probability distribution on finitely many distinct labeled examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteDistribution {
    atoms: Vec<(LabeledExample, f64)>,
}

impl FiniteDistribution {
    pub fn new(atoms: Vec<(LabeledExample, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("distribution needs at least one atom"));
        }
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for (e, p) in &atoms {
            if !p.is_finite() || *p < 0.0 {
                return Err(Error::invalid(format!("bad probability {p}")));
            }
            if !seen.insert(*e) {
                return Err(Error::invalid(format!("duplicate atom ({}, {})", e.x, e.y)));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    /// Uniform over the given atoms.
    pub fn uniform(examples: &[LabeledExample]) -> Result<Self> {
        let n = examples.len() as f64;
        Self::new(examples.iter().map(|&e| (e, 1.0 / n)).collect())
    }

    /// Normalizes nonnegative weights, fixing the last atom so the sum is exact.
    pub fn from_weights(atoms: Vec<(LabeledExample, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights must have positive total"));
        }
        let mut atoms: Vec<_> = atoms.into_iter().map(|(e, w)| (e, w / total)).collect();
        let head: f64 = atoms[..atoms.len() - 1].iter().map(|a| a.1).sum();
        let last = atoms.len() - 1;
        atoms[last].1 = (1.0 - head).max(0.0);
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[(LabeledExample, f64)] {
        &self.atoms
    }

    pub fn check_space(&self, space: InstanceSpace) -> Result<()> {
        for (e, _) in &self.atoms {
            if !space.contains(e.x) {
                return Err(Error::invalid(format!("atom instance {} outside space", e.x)));
            }
        }
        Ok(())
    }

    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(self.atoms.iter().map(|a| a.1)).expect("validated weights")
    }
}

/// `m` i.i.d. draws from `dist` under a ChaCha8 stream seeded with `seed`.
pub fn sample_iid(dist: &FiniteDistribution, m: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(dist, m, &mut rng)
}

pub fn sample_with<R: rand::Rng + ?Sized>(dist: &FiniteDistribution, m: usize, rng: &mut R) -> Vec<LabeledExample> {
    if m == 0 {
        return Vec::new();
    }
    let w = dist.sampler();
    (0..m).map(|_| dist.atoms[w.sample(rng)].0).collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            None
        } else {
            Some((i + 1, l))
        }
    })
}

fn parse_header(line: usize, l: &str) -> Result<InstanceSpace> {
    let mut it = l.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some("instances"), Some(n), None) => {
            let n: usize = n.parse().map_err(|_| Error::parse(line, "bad instance count"))?;
            InstanceSpace::new(n).map_err(|e| Error::parse(line, e.to_string()))
        }
        _ => Err(Error::parse(line, "expected `instances <n>`")),
    }
}

/// Parses `instances <n>` followed by one `+`/`-` row per hypothesis.
pub fn parse_class(text: &str) -> Result<HypothesisClass> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(1, "empty class file"))?;
    let space = parse_header(hl, header)?;
    let mut rows = Vec::new();
    for (ln, l) in lines {
        let row = TruthTable::parse_sign_string(l).map_err(|e| Error::parse(ln, e.to_string()))?;
        if row.size() != space.size() {
            return Err(Error::parse(ln, format!("row has {} entries, expected {}", row.size(), space.size())));
        }
        rows.push(row);
    }
    HypothesisClass::new(space, rows)
}

pub fn format_class(class: &HypothesisClass) -> String {
    let mut out = format!("instances {}\n", class.space().size());
    for r in class.rows() {
        out.push_str(&r.to_sign_string());
        out.push('\n');
    }
    out
}

/// Parses `atom <instance> <label> <prob>` lines; an `instances <n>` header is optional.
pub fn parse_distribution(text: &str) -> Result<FiniteDistribution> {
    let mut atoms = Vec::new();
    let mut space = None;
    for (ln, l) in content_lines(text) {
        if l.starts_with("instances") {
            space = Some(parse_header(ln, l)?);
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "atom" {
            return Err(Error::parse(ln, "expected `atom <instance> <label> <prob>`"));
        }
        let x: usize = toks[1].parse().map_err(|_| Error::parse(ln, "bad instance"))?;
        let y = Label::parse(toks[2]).ok_or_else(|| Error::parse(ln, "bad label"))?;
        let p: f64 = toks[3].parse().map_err(|_| Error::parse(ln, "bad probability"))?;
        atoms.push((LabeledExample::new(x, y), p));
    }
    let dist = FiniteDistribution::new(atoms)?;
    if let Some(s) = space {
        dist.check_space(s)?;
    }
    Ok(dist)
}

pub fn format_distribution(dist: &FiniteDistribution) -> String {
    dist.atoms().iter().map(|(e, p)| format!("atom {} {} {:?}\n", e.x, e.y, p)).collect()
}
