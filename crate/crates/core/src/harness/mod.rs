//! Experiment plumbing: configuration, seed derivation, brute-force
//! references, per-trial runners and the acceptance battery.

mod scenario;
mod suites;
mod trials;

use std::collections::HashMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturb::{splitmix64, PerturbationSet};
use crate::universe::{FiniteDistribution, HypothesisClass, LabeledExample, TruthTable};

pub use scenario::{generate_scenario, lit3_mix, Scenario, ScenarioKind, ScenarioSpec, Source};
pub use suites::{run_acceptance, AcceptanceConfig, CriterionReport, SUITES};
pub use trials::*;

/// Algorithm knobs shared by the subcommands; unset values use the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub sparse: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attacker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experts: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub params: AlgorithmParams,
    pub trials: usize,
    pub seed: u64,
}

fn unit_open(name: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(v) if !(v > 0.0 && v < 1.0) => Err(Error::invalid(format!("{name} must be in (0,1), got {v}"))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be positive"));
        }
        let p = &self.params;
        unit_open("eta", p.eta)?;
        unit_open("eps", p.eps)?;
        unit_open("delta", p.delta)?;
        for (name, v) in [("m", p.m), ("n", p.n), ("T", p.rounds), ("N", p.sparse), ("pass_cap", p.pass_cap)] {
            if v == Some(0) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub suite: String,
    pub scenario: String,
    pub trial: usize,
    pub seed: u64,
    pub metrics: serde_json::Value,
    pub violated: bool,
    /// Only filled when timings are requested, so default output stays reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

impl TrialResult {
    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("trial result serializes")
    }

    pub fn metric_f64(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).and_then(|v| v.as_f64())
    }

    pub fn metric_bool(&self, key: &str) -> Option<bool> {
        self.metrics.get(key).and_then(|v| v.as_bool())
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of trial `index` of `suite`; independent of how many trials run.
pub fn trial_seed(master: u64, suite: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(suite)).wrapping_add(index))
}

/// Runs `trials` trials on the rayon pool and returns them in index order.
pub fn run_trials<F>(suite: &str, master: u64, trials: usize, timings: bool, f: F) -> Result<Vec<TrialResult>>
where
    F: Fn(usize, u64) -> Result<TrialResult> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let start = Instant::now();
            let mut r = f(i, trial_seed(master, suite, i as u64))?;
            if timings {
                r.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            }
            Ok(r)
        })
        .collect()
}

pub fn json_lines(rows: &[TrialResult]) -> String {
    rows.iter().map(|r| r.json_line() + "\n").collect()
}

/// `delta + 3 sigma` for a Bernoulli(`delta`) rate over `trials` trials.
pub fn rate_threshold(delta: f64, trials: usize) -> f64 {
    delta + 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

pub const BRUTE_MAX_INSTANCES: usize = 16;
pub const BRUTE_MAX_ROWS: usize = 4096;

fn brute_caps(class: &HypothesisClass) -> Result<()> {
    if class.space().size() > BRUTE_MAX_INSTANCES {
        return Err(Error::ScaleCap(format!("{} instances exceeds {BRUTE_MAX_INSTANCES}", class.space().size())));
    }
    if class.len() > BRUTE_MAX_ROWS {
        return Err(Error::ScaleCap(format!("{} rows exceeds {BRUTE_MAX_ROWS}", class.len())));
    }
    Ok(())
}

/// Robust loss by scanning `U(x)` point by point.
pub fn brute_robust_loss(table: &TruthTable, ex: LabeledExample, u: &PerturbationSet) -> bool {
    u.members(ex.x).any(|z| table.eval(z) != ex.y)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub row_risks: Vec<f64>,
    pub opt_risk: f64,
    pub opt_row: usize,
    pub realizable: bool,
}

/// Exact robust risk of every row and the optimum over the class.
pub fn brute_force_oracle_suite(class: &HypothesisClass, u: &PerturbationSet, dist: &FiniteDistribution) -> Result<Reference> {
    brute_caps(class)?;
    let row_risks: Vec<f64> = class
        .rows()
        .iter()
        .map(|h| dist.atoms().iter().filter(|(ex, _)| brute_robust_loss(h, *ex, u)).map(|(_, p)| p).sum())
        .collect();
    let (opt_row, opt_risk) =
        row_risks.iter().copied().enumerate().fold((0, f64::INFINITY), |b, (i, r)| if r < b.1 { (i, r) } else { b });
    Ok(Reference { row_risks, opt_risk, opt_row, realizable: opt_risk == 0.0 })
}

/// `min_h sum_t loss_U(h, (x_t, y_t))`.
pub fn brute_opt_stream(class: &HypothesisClass, stream: &[LabeledExample], u: &PerturbationSet) -> Result<usize> {
    brute_caps(class)?;
    Ok(class.rows().iter().map(|h| stream.iter().filter(|ex| brute_robust_loss(h, **ex, u)).count()).min().unwrap_or(0))
}

pub const TREE_MAX_INSTANCES: usize = 4;

/// Every complete depth-`d` mistake tree on `n` points whose paths never
/// repeat a point, as the (care, value) label constraint of each leaf path.
/// Trees that repeat a point on a path can never be shattered.
fn mistake_trees(n: usize, d: usize) -> Vec<Vec<(u32, u32)>> {
    fn fill(nodes: &mut Vec<usize>, n: usize, internal: usize, out: &mut Vec<Vec<usize>>) {
        let j = nodes.len();
        if j == internal {
            out.push(nodes.clone());
            return;
        }
        let mut used = 0u32;
        let mut a = j;
        while a > 0 {
            a = (a - 1) / 2;
            used |= 1 << nodes[a];
        }
        for x in 0..n {
            if used & (1 << x) == 0 {
                nodes.push(x);
                fill(nodes, n, internal, out);
                nodes.pop();
            }
        }
    }
    let mut trees = Vec::new();
    fill(&mut Vec::new(), n, (1 << d) - 1, &mut trees);
    trees
        .into_iter()
        .map(|nodes| {
            (0..1u32 << d)
                .map(|path| {
                    let (mut i, mut care, mut value) = (0usize, 0u32, 0u32);
                    for k in 0..d {
                        let bit = (path >> k) & 1;
                        care |= 1 << nodes[i];
                        value |= bit << nodes[i];
                        i = 2 * i + 1 + bit as usize;
                    }
                    (care, value)
                })
                .collect()
        })
        .collect()
}

/// Littlestone dimension by explicit enumeration of mistake trees.
pub struct TreeEnumerator {
    n: usize,
    trees: HashMap<usize, Vec<Vec<(u32, u32)>>>,
}

impl TreeEnumerator {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > TREE_MAX_INSTANCES {
            return Err(Error::ScaleCap(format!("tree enumeration needs 1..={TREE_MAX_INSTANCES} points, got {n}")));
        }
        Ok(Self { n, trees: (1..=n).map(|d| (d, mistake_trees(n, d))).collect() })
    }

    /// Largest depth of a tree all of whose paths some row realizes; -1 for no rows.
    pub fn lit(&self, rows: &[u64]) -> i32 {
        if rows.is_empty() {
            return -1;
        }
        let width = 1usize << self.n;
        let mut ok = vec![false; width * width];
        for &r in rows {
            for care in 0..width {
                ok[care * width + (r as usize & care)] = true;
            }
        }
        let mut best = 0;
        for d in 1..=self.n {
            let found = self.trees[&d]
                .iter()
                .any(|paths| paths.iter().all(|&(c, v)| ok[c as usize * width + v as usize]));
            if !found {
                break;
            }
            best = d as i32;
        }
        best
    }
}

/// Checks the memoized recursion against tree enumeration on every
/// nonempty class over `n` points. Returns (classes checked, mismatches).
pub fn littlestone_sweep(n: usize) -> Result<(usize, usize)> {
    if n > 4 {
        return Err(Error::ScaleCap(format!("exhaustive class sweep is limited to 4 points, got {n}")));
    }
    let enumerator = TreeEnumerator::new(n)?;
    let space = crate::universe::InstanceSpace::new(n)?;
    let tables = 1u64 << n;
    let classes = (1u64 << tables) - 1;
    let mismatches = (1..=classes)
        .into_par_iter()
        .filter(|&set| {
            let rows: Vec<u64> = (0..tables).filter(|t| set >> t & 1 == 1).collect();
            let class = HypothesisClass::new(space, rows.iter().map(|&p| TruthTable::new(n, p)).collect())
                .expect("distinct rows");
            crate::universe::littlestone_dimension(&class) as i32 != enumerator.lit(&rows)
        })
        .count();
    Ok((classes as usize, mismatches))
}
