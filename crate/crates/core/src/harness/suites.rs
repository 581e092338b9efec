//! The acceptance battery.

use std::time::Instant;

use serde_json::json;

use super::{
    cyclerobust_trial, game_trial, generate_scenario, imperfect_trial, json_lines, lit3_mix, littlestone_sweep,
    lowerbound_row, online_to_batch_trial, rate_threshold, rlua_agnostic_trial, rlua_trial, run_trials, trial_seed,
    wm_trial, CycleParams, RluaParams, Scenario, ScenarioSpec, TrialResult, WmParams,
};
use crate::error::{Error, Result};
use crate::games::LbStrategy;
use crate::universe::{littlestone_dimension, make_threshold_class, threshold_dimension, vc_dimension};

/// Criterion number, suite id and runtime budget in seconds.
pub const SUITES: &[(u8, &str, f64)] = &[
    (1, "dimensions", 10.0),
    (2, "cyclerobust-realizable", 60.0),
    (3, "cyclerobust-generalization", 600.0),
    (4, "rlua-pipeline", 1800.0),
    (5, "agnostic-reduction", 600.0),
    (6, "wm-regret", 600.0),
    (7, "online-to-batch", 600.0),
    (8, "soa-attack-bound", 300.0),
    (9, "threshold-lower-bound", 300.0),
    (10, "survivor", 600.0),
    (11, "determinism", f64::INFINITY),
];

#[derive(Clone, Debug)]
pub struct AcceptanceConfig {
    pub seed: u64,
    pub timings: bool,
    /// Multiplies every trial count; 1.0 runs the stated counts.
    pub scale: f64,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        Self { seed: 20240101, timings: false, scale: 1.0 }
    }
}

impl AcceptanceConfig {
    fn count(&self, n: usize) -> usize {
        ((n as f64 * self.scale).round() as usize).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: u8,
    pub suite: String,
    /// Statistic passed and the run stayed within budget.
    pub passed: bool,
    pub statistic_passed: bool,
    pub seconds: f64,
    pub budget_seconds: f64,
    pub summary: serde_json::Value,
    pub rows: Vec<TrialResult>,
}

impl CriterionReport {
    /// One human-readable pass/fail line.
    pub fn line(&self) -> String {
        let budget = if self.budget_seconds.is_finite() { format!("{:.0}", self.budget_seconds) } else { "-".into() };
        format!(
            "[{}] criterion {:>2} {:<28} {:.1}s (budget {budget}s) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.suite,
            self.seconds,
            self.summary
        )
    }

    /// Trial rows followed by one summary row; no timing data unless requested.
    pub fn json_lines(&self) -> String {
        let mut out = json_lines(&self.rows);
        let summary = json!({
            "criterion": self.id,
            "suite": self.suite,
            "passed": self.statistic_passed,
            "summary": self.summary,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }

    /// The report as one JSON document, timings included.
    pub fn document(&self) -> serde_json::Value {
        json!({
            "criterion": self.id,
            "suite": self.suite,
            "passed": self.passed,
            "statistic_passed": self.statistic_passed,
            "seconds": self.seconds,
            "budget_seconds": if self.budget_seconds.is_finite() { Some(self.budget_seconds) } else { None },
            "trials": self.rows.len(),
            "summary": self.summary,
        })
    }
}

fn lookup(suite: &str) -> Result<(u8, &'static str, f64)> {
    SUITES
        .iter()
        .copied()
        .find(|(id, name, _)| *name == suite || id.to_string() == suite)
        .ok_or_else(|| Error::invalid(format!("unknown suite {suite:?}")))
}

/// Runs one suite by id or number, or every suite for `all`.
pub fn run_acceptance(suite: &str, cfg: &AcceptanceConfig) -> Result<Vec<CriterionReport>> {
    if suite == "all" {
        let mut reports = battery(cfg)?;
        reports.push(determinism(cfg, Some(&reports))?);
        return Ok(reports);
    }
    let (id, _, _) = lookup(suite)?;
    Ok(vec![if id == 11 { determinism(cfg, None)? } else { run_one(id, cfg)? }])
}

fn battery(cfg: &AcceptanceConfig) -> Result<Vec<CriterionReport>> {
    (1..=10).map(|id| run_one(id, cfg)).collect()
}

fn run_one(id: u8, cfg: &AcceptanceConfig) -> Result<CriterionReport> {
    let (_, name, budget) = lookup(&id.to_string())?;
    let start = Instant::now();
    let (rows, ok, summary) = match id {
        1 => dimensions(name)?,
        2 => cyclerobust_realizable(name, cfg)?,
        3 => cyclerobust_generalization(name, cfg)?,
        4 => rlua_pipeline(name, cfg)?,
        5 => agnostic_reduction(name, cfg)?,
        6 => wm_regret(name, cfg)?,
        7 => online_batch(name, cfg)?,
        8 => soa_attack(name, cfg)?,
        9 => lower_bound(name, cfg)?,
        10 => survivor(name, cfg)?,
        _ => unreachable!("criterion 11 runs through determinism()"),
    };
    let seconds = start.elapsed().as_secs_f64();
    Ok(CriterionReport {
        id,
        suite: name.into(),
        passed: ok && seconds < budget,
        statistic_passed: ok,
        seconds,
        budget_seconds: budget,
        summary,
        rows,
    })
}

type Outcome = (Vec<TrialResult>, bool, serde_json::Value);

/// Atoms per acceptance scenario; every eligible point up to this many.
const ATOMS: usize = 12;

fn scenario(kind_index: usize, realizable: bool, seed: u64) -> Result<Scenario> {
    let kind = lit3_mix(kind_index);
    let mut spec = if realizable { ScenarioSpec::realizable(kind) } else { ScenarioSpec::agnostic(kind, 0.2) };
    spec.atoms = Some(ATOMS);
    generate_scenario(&spec, seed)
}

fn flag(r: &TrialResult, key: &str) -> bool {
    r.metric_bool(key).unwrap_or(false)
}

fn dimensions(name: &str) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut ok = true;
    for (i, n) in [2usize, 4, 8, 16].into_iter().enumerate() {
        let class = make_threshold_class(n)?;
        let (vc, tdim, lit) = (vc_dimension(&class), threshold_dimension(&class), littlestone_dimension(&class));
        let expect_lit = n.ilog2() as usize;
        let good = vc == 1 && tdim == n && lit == expect_lit;
        ok &= good;
        let metrics = json!({"n": n, "vc": vc, "tdim": tdim, "lit": lit, "expected_lit": expect_lit});
        rows.push(TrialResult {
            suite: name.into(),
            scenario: format!("thresholds-{n}"),
            trial: i,
            seed: 0,
            metrics,
            violated: !good,
            wall_ms: None,
        });
    }
    let mut classes = 0;
    for n in 1..=4 {
        let (checked, mismatches) = littlestone_sweep(n)?;
        classes += checked;
        ok &= mismatches == 0;
        rows.push(TrialResult {
            suite: name.into(),
            scenario: format!("all-classes-{n}"),
            trial: 3 + n,
            seed: 0,
            metrics: json!({"instances": n, "classes": checked, "mismatches": mismatches}),
            violated: mismatches > 0,
            wall_ms: None,
        });
    }
    Ok((rows, ok, json!({"classes_swept": classes, "threshold_checks": 4})))
}

fn cyclerobust_realizable(name: &str, cfg: &AcceptanceConfig) -> Result<Outcome> {
    let trials = cfg.count(500);
    let rows = run_trials(name, cfg.seed, trials, cfg.timings, |i, seed| {
        let sc = scenario(i, true, seed)?;
        let p = CycleParams { m: 10 + (seed % 31) as usize, delta: 0.1, stability_draws: 8, pass_cap: None };
        cyclerobust_trial(name, &sc, &p, i, seed)
    })?;
    let bad = rows
        .iter()
        .filter(|r| {
            let f = |k| r.metric_f64(k).unwrap_or(f64::NAN);
            !(f("empirical_loss") == 0.0
                && f("k") <= f("lit")
                && f("queries") <= f("query_cap")
                && flag(r, "stable")
                && flag(r, "replay_matches")
                && flag(r, "replay_ok"))
        })
        .count();
    let summary = json!({"trials": trials, "failures": bad});
    Ok((rows, bad == 0, summary))
}

fn rate_outcome(rows: Vec<TrialResult>, delta: f64, extra_bad: usize) -> Outcome {
    let trials = rows.len();
    let violations = rows.iter().filter(|r| r.violated).count();
    let rate = violations as f64 / trials as f64;
    let threshold = rate_threshold(delta, trials);
    let summary = json!({
        "trials": trials,
        "violations": violations,
        "rate": rate,
        "threshold": threshold,
        "hard_failures": extra_bad,
    });
    (rows, rate <= threshold && extra_bad == 0, summary)
}

fn cyclerobust_generalization(name: &str, cfg: &AcceptanceConfig) -> Result<Outcome> {
    let rows = run_trials(name, cfg.seed, cfg.count(2000), cfg.timings, |i, seed| {
        let sc = scenario(i, true, seed)?;
        let p = CycleParams { m: 400, delta: 0.1, stability_draws: 0, pass_cap: None };
        cyclerobust_trial(name, &sc, &p, i, seed)
    })?;
    let bad = rows.iter().filter(|r| r.metric_f64("empirical_loss") != Some(0.0) || !flag(r, "replay_ok")).count();
    Ok(rate_outcome(rows, 0.1, bad))
}

const RLUA_SCENARIOS: usize = 50;

fn rlua_pipeline(name: &str, cfg: &AcceptanceConfig) -> Result<Outcome> {
    let scenarios = cfg.count(RLUA_SCENARIOS);
    let per = 20;
    let pool: Vec<Scenario> = (0..scenarios)
        .map(|i| scenario(i, true, trial_seed(cfg.seed, "rlua-pipeline/scenario", i as u64)))
        .collect::<Result<_>>()?;
    let p = RluaParams { m: 40, n: Some(3), rounds: None, sparse: Some(9), delta: 0.1, pass_cap: None };
    let rows = run_trials(name, cfg.seed, scenarios * per, cfg.timings, |i, seed| {
        rlua_trial(name, &pool[i / per], &p, i, seed)
    })?;
    let ran: Vec<&TrialResult> = rows.iter().filter(|r| r.metrics.get("failed").is_some_and(|f| f.is_null())).collect();
    let patterns = ran.iter().filter(|r| !flag(r, "patterns_match")).count();
    let margins = ran.iter().filter(|r| !flag(r, "margin_ok")).count();
    let losses = ran.iter().filter(|r| r.metric_f64("empirical_loss") != Some(0.0)).count();
    let replays = ran.iter().filter(|r| !flag(r, "replay_ok")).count();
    let failed_runs = rows.len() - ran.len();
    let (rows, ok, mut summary) = rate_outcome(rows, 0.1, patterns + margins + losses + replays);
    summary["pattern_mismatches"] = json!(patterns);
    summary["margin_failures"] = json!(margins);
    summary["nonzero_losses"] = json!(losses);
    summary["failed_runs"] = json!(failed_runs);
    summary["scenarios"] = json!(scenarios);
    Ok((rows, ok, summary))
}

fn agnostic_reduction(name: &str, cfg: &AcceptanceConfig) -> Result<Outcome> {
    let trials = cfg.count(200);
    let rows = run_trials(name, cfg.seed, trials, cfg.timings, |i, seed| {
        let sc = scenario(i, false, seed)?;
        let p = RluaParams { m: 8 + i % 5, n: Some(3), rounds: None, sparse: Some(9), delta: 0.1, pass_cap: None };
        rlua_agnostic_trial(name, &sc, &p, i, seed)
    })?;
    let unequal = rows.iter().filter(|r| r.violated).count();
    let above = rows.iter().filter(|r| !flag(r, "at_most_opt")).count();
    let ok = unequal == 0 && rows.iter().all(|r| flag(r, "replay_ok"));
    Ok((rows, ok, json!({"trials": trials, "not_equal_opt": unequal, "above_opt": above})))
}

fn wm_regret(name: &str, cfg: &AcceptanceConfig) -> Result<Outcome> {
    let finite = cfg.count(500);
    let experts = cfg.count(100);
    let etas = [0.25, 0.5, 0.75];
    let mut rows = run_trials(name, cfg.seed, finite, cfg.timings, |i, seed| {
        let sc = scenario(i, false, seed)?;
        let p = WmParams { horizon: 40, eta: Some(etas[i % 3]), experts: false, explicit: false };
        wm_trial(name, &sc, &p, i, seed)
    })?;
    let expert_suite = format!("{name}/experts");
    rows.extend(run_trials(&expert_suite, cfg.seed, experts, cfg.timings, |i, seed| {
        let sc = scenario(i, false, seed)?;
        let p = WmParams { horizon: 12 + i % 9, eta: None, experts: true, explicit: true };
        wm_trial(&expert_suite, &sc, &p, i, seed)
    })?);
    let finite_bad = rows[..finite].iter().filter(|r| r.violated).count();
    let expert_bad = rows[finite..].iter().filter(|r| r.violated).count();
    let replays = rows.iter().filter(|r| !flag(r, "replay_ok")).count();
    let summary = json!({
        "finite_streams": finite,
        "finite_violations": finite_bad,
        "expert_streams": experts,
        "expert_violations": expert_bad,
        "replay_failures": replays,
    });
    Ok((rows, finite_bad + expert_bad + replays == 0, summary))
}

fn online_batch(name: &str, cfg: &AcceptanceConfig) -> Result<Outcome> {
    let (eps, delta) = (0.2, 0.2);
    let rows = run_trials(name, cfg.seed, cfg.count(500), cfg.timings, |i, seed| {
        let sc = scenario(i, false, seed)?;
        online_to_batch_trial(name, &sc, eps, delta, i, seed)
    })?;
    let trials = rows.len();
    let failures = rows.iter().filter(|r| r.violated).count();
    let replays = rows.iter().filter(|r| !flag(r, "replay_ok")).count();
    let freq = 1.0 - failures as f64 / trials as f64;
    let summary = json!({"trials": trials, "failures": failures, "success_rate": freq, "required": 1.0 - delta});
    Ok((rows, freq >= 1.0 - delta && replays == 0, summary))
}

const ATTACKERS: [&str; 4] = ["identity", "uniform", "greedy", "blind:0.5"];
const HORIZONS: [usize; 4] = [10, 100, 1000, 10000];

fn soa_attack(name: &str, cfg: &AcceptanceConfig) -> Result<Outcome> {
    let scenarios = cfg.count(12);
    let per = ATTACKERS.len() * HORIZONS.len();
    let pool: Vec<Scenario> = (0..scenarios)
        .map(|i| scenario(i, true, trial_seed(cfg.seed, "soa-attack-bound/scenario", i as u64)))
        .collect::<Result<_>>()?;
    let rows = run_trials(name, cfg.seed, scenarios * per, cfg.timings, |i, seed| {
        let (s, rest) = (i / per, i % per);
        game_trial(name, &pool[s], ATTACKERS[rest / HORIZONS.len()], HORIZONS[rest % HORIZONS.len()], 0, i, seed)
    })?;
    let bad = rows.iter().filter(|r| r.violated).count();
    let max_excess = rows
        .iter()
        .map(|r| r.metric_f64("successes").unwrap_or(0.0) - r.metric_f64("lit").unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((rows, bad == 0, json!({"games": scenarios * per, "violations": bad, "max_successes_minus_lit": max_excess})))
}

fn lower_bound(name: &str, cfg: &AcceptanceConfig) -> Result<Outcome> {
    let reps = cfg.count(5000);
    let strategies = [LbStrategy::BinarySearch, LbStrategy::Soa, LbStrategy::Random];
    let mut rows = Vec::new();
    for (di, d) in [9usize, 17, 33].into_iter().enumerate() {
        for (si, s) in strategies.into_iter().enumerate() {
            let index = di * strategies.len() + si;
            rows.push(lowerbound_row(name, d, s, reps, index, trial_seed(cfg.seed, name, index as u64))?);
        }
    }
    let bad = rows.iter().filter(|r| r.violated).count();
    Ok((rows, bad == 0, json!({"cells": 9, "reps": reps, "violations": bad})))
}

fn survivor(name: &str, cfg: &AcceptanceConfig) -> Result<Outcome> {
    let rows = run_trials(name, cfg.seed, cfg.count(2000), cfg.timings, |i, seed| {
        let sc = scenario(i, true, seed)?;
        let attacker = if i % 2 == 0 { "uniform" } else { "blind:0.5" };
        imperfect_trial(name, &sc, attacker, 0.2, 0.2, i, seed)
    })?;
    let hard = rows.iter().filter(|r| !flag(r, "updates_ok") || !flag(r, "rounds_ok")).count();
    Ok(rate_outcome(rows, 0.2, hard))
}

fn battery_lines(reports: &[CriterionReport]) -> String {
    reports.iter().map(|r| r.json_lines()).collect()
}

fn determinism(cfg: &AcceptanceConfig, first: Option<&[CriterionReport]>) -> Result<CriterionReport> {
    let start = Instant::now();
    let plain = AcceptanceConfig { timings: false, ..cfg.clone() };
    let owned;
    let first = match first {
        Some(f) if !cfg.timings => f,
        _ => {
            owned = battery(&plain)?;
            &owned[..]
        }
    };
    let second = battery(&plain)?;
    let (a, b) = (battery_lines(first), battery_lines(&second));
    let identical = a == b;
    let rows: Vec<&TrialResult> = first.iter().flat_map(|r| &r.rows).collect();
    let replay_failures = rows.iter().filter(|r| r.metric_bool("replay_ok") == Some(false)).count();
    let verified: f64 = rows.iter().filter_map(|r| r.metric_f64("verified")).sum();
    let summary = json!({
        "identical": identical,
        "bytes": a.len(),
        "lines": a.lines().count(),
        "verified_responses": verified,
        "replay_failures": replay_failures,
    });
    let ok = identical && replay_failures == 0 && verified > 0.0;
    Ok(CriterionReport {
        id: 11,
        suite: "determinism".into(),
        passed: ok,
        statistic_passed: ok,
        seconds: start.elapsed().as_secs_f64(),
        budget_seconds: f64::INFINITY,
        summary,
        rows: Vec::new(),
    })
}
