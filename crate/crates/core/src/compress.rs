//! CycleRobust: cycle a conservative online learner over a sample, feeding it
//! each counterexample the oracle finds, until one full pass is clean. The
//! counterexamples form a stable compression set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::online::LearnerFactory;
use crate::perturb::{AttackOracle, LoggedOracle, OracleResponse, Predictor, QueryLog};
use crate::universe::{Label, LabeledExample, TruthTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressedPoint {
    pub z: usize,
    pub y: Label,
    /// Index of the training example whose query produced `z`.
    pub origin: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionRecord {
    pub points: Vec<CompressedPoint>,
}

impl CompressionRecord {
    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn origins(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.origin).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CycleOutput {
    pub predictor: Predictor,
    pub record: CompressionRecord,
    pub log: QueryLog,
    pub passes: usize,
}

/// Pass cap used throughout: one pass per possible mistake, one clean pass, one spare.
pub fn default_pass_cap(lit: usize) -> usize {
    lit + 2
}

pub fn cycle_robust(
    sample: &[LabeledExample],
    factory: &dyn LearnerFactory,
    oracle: &dyn AttackOracle,
    pass_cap: usize,
) -> Result<CycleOutput> {
    let mut logged = LoggedOracle::new(oracle);
    let (predictor, record, passes) = cycle_robust_logged(sample, factory, &mut logged, pass_cap)?;
    Ok(CycleOutput { predictor, record, log: logged.take_log(), passes })
}

/// Same as [`cycle_robust`] but appends queries to an existing log.
pub fn cycle_robust_logged(
    sample: &[LabeledExample],
    factory: &dyn LearnerFactory,
    oracle: &mut LoggedOracle<'_>,
    pass_cap: usize,
) -> Result<(Predictor, CompressionRecord, usize)> {
    let mut learner = factory.fresh();
    let mut current = learner.predictor();
    let mut record = CompressionRecord::default();
    let start = oracle.count();
    let non_realizable = |reason: String, oracle: &LoggedOracle<'_>| Error::NonRealizable {
        reason,
        queries: oracle.count() - start,
        transcript: Box::new(oracle.log().clone()),
    };
    for pass in 1..=pass_cap {
        let mut clean = true;
        for (i, ex) in sample.iter().enumerate() {
            if let OracleResponse::Counterexample(z) = oracle.query(&current, *ex) {
                clean = false;
                learner.observe(LabeledExample::new(z, ex.y));
                record.points.push(CompressedPoint { z, y: ex.y, origin: i });
                if learner.exhausted() {
                    return Err(non_realizable("version space emptied".into(), oracle));
                }
                current = learner.predictor();
            }
        }
        if clean {
            return Ok((current, record, pass));
        }
    }
    Err(non_realizable(format!("no clean pass within {pass_cap} passes"), oracle))
}

/// Feeds the compression sequence to a fresh learner and returns its table.
pub fn replay(record: &CompressionRecord, factory: &dyn LearnerFactory) -> TruthTable {
    let mut learner = factory.fresh();
    for p in &record.points {
        learner.observe(LabeledExample::new(p.z, p.y));
    }
    learner.table()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub checked: usize,
    pub stable: bool,
}

/// Reruns CycleRobust on subsequences that keep the compression set and
/// checks the output and the compression set do not change. Tries
/// `draws` random subsequences plus the full sample and the compression set alone.
pub fn stability_check<R: Rng + ?Sized>(
    sample: &[LabeledExample],
    factory: &dyn LearnerFactory,
    oracle: &dyn AttackOracle,
    pass_cap: usize,
    draws: usize,
    rng: &mut R,
) -> Result<StabilityReport> {
    let base = cycle_robust(sample, factory, oracle, pass_cap)?;
    let keep: std::collections::HashSet<usize> = base.record.origins().into_iter().collect();
    let mut subsets: Vec<Vec<usize>> = vec![(0..sample.len()).collect()];
    let mut only: Vec<usize> = keep.iter().copied().collect();
    only.sort_unstable();
    subsets.push(only);
    for _ in 0..draws {
        subsets.push((0..sample.len()).filter(|i| keep.contains(i) || rng.gen_bool(0.5)).collect());
    }
    let mut checked = 0;
    for idx in &subsets {
        let sub: Vec<LabeledExample> = idx.iter().map(|&i| sample[i]).collect();
        let out = cycle_robust(&sub, factory, oracle, pass_cap)?;
        checked += 1;
        let mapped: Vec<CompressedPoint> =
            out.record.points.iter().map(|p| CompressedPoint { origin: idx[p.origin], ..*p }).collect();
        if out.predictor.table() != base.predictor.table() || mapped != base.record.points {
            return Ok(StabilityReport { checked, stable: false });
        }
    }
    Ok(StabilityReport { checked, stable: true })
}

/// Generalization bound for a stable compression scheme of size `k`.
pub fn stable_compression_bound(m: usize, k: usize, delta: f64) -> Result<f64> {
    if m <= 2 * k {
        return Err(Error::invalid(format!("stable bound needs m > 2k (m={m}, k={k})")));
    }
    check_delta(delta)?;
    Ok(2.0 / (m - 2 * k) as f64 * (k as f64 * 4f64.ln() + (1.0 / delta).ln()))
}

/// Generalization bound for a (not necessarily stable) compression of size `k`.
pub fn robust_compression_bound(m: usize, k: usize, delta: f64) -> Result<f64> {
    if m <= k {
        return Err(Error::invalid(format!("compression bound needs m > k (m={m}, k={k})")));
    }
    check_delta(delta)?;
    Ok((k as f64 * (m as f64).ln() + (1.0 / delta).ln()) / (m - k) as f64)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must be in (0,1), got {delta}")));
    }
    Ok(())
}
