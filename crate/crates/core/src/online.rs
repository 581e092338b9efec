//! Online learners. The main one is the Standard Optimal Algorithm (SOA),
//! which predicts the label whose restricted version space has the larger
//! Littlestone dimension.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturb::{Predictor, PredictorKind};
use crate::universe::{HypSet, HypothesisClass, Label, LabeledExample, LitOracle, TruthTable};

/// A learner that predicts on a stream and is told the true label after each round.
pub trait OnlineLearner: Send {
    fn table(&self) -> TruthTable;

    fn predictor(&self) -> Predictor;

    fn predict(&self, x: usize) -> Label {
        self.table().eval(x)
    }

    /// Reveals `(x, y)`. Conservative learners change state only when they
    /// mispredicted `x`.
    fn observe(&mut self, ex: LabeledExample);

    fn is_conservative(&self) -> bool;

    fn updates(&self) -> usize;

    /// True once the version space is empty (the stream was not realizable).
    fn exhausted(&self) -> bool;
}

pub trait LearnerFactory: Sync {
    fn fresh(&self) -> Box<dyn OnlineLearner>;
}

/// State shared by every SOA over one class: the Littlestone memo and the
/// truth table of each version space seen so far.
#[derive(Debug)]
pub struct SoaShared {
    lit: LitOracle,
    tables: Mutex<HashMap<HypSet, TruthTable>>,
}

impl SoaShared {
    pub fn new(class: Arc<HypothesisClass>) -> Arc<Self> {
        Arc::new(Self { lit: LitOracle::new(class), tables: Mutex::new(HashMap::new()) })
    }

    pub fn class(&self) -> &HypothesisClass {
        self.lit.class()
    }

    pub fn lit(&self) -> &LitOracle {
        &self.lit
    }

    /// SOA prediction at `x` for version space `v`; ties go to +1.
    pub fn predict(&self, v: &HypSet, x: usize) -> Label {
        let c = self.lit.class();
        let lp = self.lit.lit(&c.restrict(v, x, Label::Pos));
        let ln = self.lit.lit(&c.restrict(v, x, Label::Neg));
        Label::from_bool(lp >= ln)
    }

    /// Full SOA truth table for `v`; an empty version space predicts +1 everywhere.
    pub fn table(&self, v: &HypSet) -> TruthTable {
        let n = self.lit.class().space().size();
        if v.is_empty() {
            return TruthTable::constant(n, Label::Pos);
        }
        if let Some(t) = self.tables.lock().unwrap().get(v) {
            return *t;
        }
        let mut pos = 0u64;
        for x in 0..n {
            if self.predict(v, x).is_pos() {
                pos |= 1 << x;
            }
        }
        let t = TruthTable::new(n, pos);
        self.tables.lock().unwrap().insert(v.clone(), t);
        t
    }
}

#[derive(Clone, Debug)]
pub struct Soa {
    shared: Arc<SoaShared>,
    version: HypSet,
    table: TruthTable,
    always_update: bool,
    updates: usize,
}

impl Soa {
    pub fn new(shared: Arc<SoaShared>) -> Self {
        let version = shared.class().all();
        let table = shared.table(&version);
        Self { shared, version, table, always_update: false, updates: 0 }
    }

    /// Restricts the version space on every revealed example, not only on mistakes.
    pub fn always_update(mut self) -> Self {
        self.always_update = true;
        self
    }

    pub fn version(&self) -> &HypSet {
        &self.version
    }

    pub fn shared(&self) -> &Arc<SoaShared> {
        &self.shared
    }
}

/// Conservative SOA over `class`.
pub fn soa(class: Arc<HypothesisClass>) -> Soa {
    Soa::new(SoaShared::new(class))
}

impl OnlineLearner for Soa {
    fn table(&self) -> TruthTable {
        self.table
    }

    fn predictor(&self) -> Predictor {
        Predictor::with_kind(self.table, PredictorKind::OnlineState { updates: self.updates })
    }

    fn observe(&mut self, ex: LabeledExample) {
        if self.version.is_empty() {
            return;
        }
        if !self.always_update && self.table.eval(ex.x) == ex.y {
            return;
        }
        let next = self.shared.class().restrict(&self.version, ex.x, ex.y);
        if next != self.version {
            self.version = next;
            self.table = self.shared.table(&self.version);
        }
        self.updates += 1;
    }

    fn is_conservative(&self) -> bool {
        !self.always_update
    }

    fn updates(&self) -> usize {
        self.updates
    }

    fn exhausted(&self) -> bool {
        self.version.is_empty()
    }
}

#[derive(Clone)]
pub struct SoaFactory {
    shared: Arc<SoaShared>,
    always_update: bool,
}

impl SoaFactory {
    pub fn new(shared: Arc<SoaShared>) -> Self {
        Self { shared, always_update: false }
    }

    pub fn always_update(shared: Arc<SoaShared>) -> Self {
        Self { shared, always_update: true }
    }

    pub fn shared(&self) -> &Arc<SoaShared> {
        &self.shared
    }

    pub fn soa(&self) -> Soa {
        let s = Soa::new(self.shared.clone());
        if self.always_update {
            s.always_update()
        } else {
            s
        }
    }
}

impl LearnerFactory for SoaFactory {
    fn fresh(&self) -> Box<dyn OnlineLearner> {
        Box::new(self.soa())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MistakeRecord {
    pub length: usize,
    /// Zero-based rounds on which the prediction was wrong.
    pub mistakes: Vec<usize>,
    pub final_table: TruthTable,
    pub exhausted: bool,
}

/// Runs the learner over `seq`, checking that a conservative learner keeps
/// its hypothesis on correct rounds.
pub fn run_sequence(learner: &mut dyn OnlineLearner, seq: &[LabeledExample]) -> Result<MistakeRecord> {
    let mut mistakes = Vec::new();
    for (t, ex) in seq.iter().enumerate() {
        let before = learner.table();
        let wrong = before.eval(ex.x) != ex.y;
        if wrong {
            mistakes.push(t);
        }
        learner.observe(*ex);
        if !wrong && learner.is_conservative() && learner.table() != before {
            return Err(Error::ContractViolation(format!("conservative learner changed state on correct round {t}")));
        }
    }
    Ok(MistakeRecord { length: seq.len(), mistakes, final_table: learner.table(), exhausted: learner.exhausted() })
}

/// Adaptive adversary that forces the SOA to err as often as possible: each
/// round it picks the point whose opposite-of-prediction branch has the
/// largest Littlestone dimension and reveals that label. The produced
/// sequence is consistent with some row of the class.
pub fn forcing_sequence(learner: &mut Soa) -> Vec<LabeledExample> {
    let mut seq = Vec::new();
    loop {
        let shared = learner.shared().clone();
        let class = shared.class();
        let v = learner.version().clone();
        let mut best: Option<(i32, usize, Label)> = None;
        for x in 0..class.space().size() {
            let y = learner.predict(x).flip();
            let d = shared.lit().lit(&class.restrict(&v, x, y));
            if d >= 0 && best.is_none_or(|b| d > b.0) {
                best = Some((d, x, y));
            }
        }
        match best {
            Some((_, x, y)) => {
                let ex = LabeledExample::new(x, y);
                learner.observe(ex);
                seq.push(ex);
            }
            None => return seq,
        }
    }
}

/// Parses `<instance> <label>` lines.
pub fn parse_sequence(text: &str) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::parse(i + 1, "expected `<instance> <label>`"));
        }
        let x = toks[0].parse().map_err(|_| Error::parse(i + 1, "bad instance"))?;
        let y = Label::parse(toks[1]).ok_or_else(|| Error::parse(i + 1, "bad label"))?;
        out.push(LabeledExample::new(x, y));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::universe::make_threshold_class;

    #[test]
    fn empty_version_space_predicts_plus() {
        let c = Arc::new(make_threshold_class(3).unwrap());
        let mut s = soa(c);
        // no threshold is negative on point 0
        s.observe(LabeledExample::new(0, Label::Neg));
        assert!(s.exhausted());
        assert_eq!(s.table().negatives(), 0);
    }

    #[test]
    fn sequence_parser() {
        let seq = parse_sequence("0 +1\n# c\n3 -1\n").unwrap();
        assert_eq!(seq, vec![LabeledExample::new(0, Label::Pos), LabeledExample::new(3, Label::Neg)]);
        assert!(parse_sequence("0\n").is_err());
    }
}
