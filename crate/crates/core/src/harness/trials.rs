//! One trial of each experiment, as a JSON row.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use super::{brute_opt_stream, brute_robust_loss, Scenario, TrialResult};
use crate::agnostic_wm::{
    default_eta, expert_family_size, ln_expert_family_size, make_expert_family, online_to_batch,
    online_to_batch_sample_size, raw_bound, tuned_bound, wm_experts, wm_experts_aggregated, wm_finite, WmResult,
    MAX_EXPERTS,
};
use crate::compress::{cycle_robust, default_pass_cap, replay, stability_check, stable_compression_bound};
use crate::error::{Error, Result};
use crate::games::{
    attack_game, attacker_by_name, attacker_error_exact, game_class, survivor_learn, threshold_lower_bound_game,
    AttackerContract, LbStrategy,
};
use crate::online::{OnlineLearner, SoaFactory, SoaShared};
use crate::perturb::{attack_check, robust_risk, CanonicalOracle, QueryLog};
use crate::rlua::{
    agnostic_reduce, brute_force_patterns, error_pattern, rlua_learn, sauer_count, ConfidenceConfig, RluaConfig,
    MIN_MARGIN,
};
use crate::universe::{sample_with, vc_dimension, Label, LabeledExample, TruthTable};

fn row(suite: &str, sc: &str, trial: usize, seed: u64, metrics: serde_json::Value, violated: bool) -> TrialResult {
    TrialResult { suite: suite.into(), scenario: sc.into(), trial, seed, metrics, violated, wall_ms: None }
}

/// Replays a query log against `U`; returns (all verified, records checked).
pub fn replay_log(log: &QueryLog, sc: &Scenario) -> (bool, usize) {
    match attack_check(log, &sc.u) {
        Ok(n) => (true, n),
        Err(_) => (false, log.count()),
    }
}

fn empirical_loss(table: &TruthTable, sample: &[LabeledExample], sc: &Scenario) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    sample.iter().filter(|ex| brute_robust_loss(table, **ex, &sc.u)).count() as f64 / sample.len() as f64
}

pub struct CycleParams {
    pub m: usize,
    pub delta: f64,
    pub stability_draws: usize,
    pub pass_cap: Option<usize>,
}

/// CycleRobust on `m` draws. Violation means the exact robust risk exceeds
/// the stable-compression bound at size `lit`.
pub fn cyclerobust_trial(suite: &str, sc: &Scenario, p: &CycleParams, trial: usize, seed: u64) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = sample_with(&sc.dist, p.m, &mut rng);
    let lit = sc.lit();
    let cap = p.pass_cap.unwrap_or(default_pass_cap(lit));
    let factory = SoaFactory::new(sc.shared.clone());
    let oracle = CanonicalOracle::new(sc.u.clone());
    let out = cycle_robust(&sample, &factory, &oracle, cap)?;
    let table = *out.predictor.table();
    let risk = robust_risk(&table, &sc.dist, &sc.u);
    let bound = stable_compression_bound(p.m, lit, p.delta).ok();
    let violated = bound.is_some_and(|b| risk > b);
    let stability = if p.stability_draws > 0 {
        Some(stability_check(&sample, &factory, &oracle, cap, p.stability_draws, &mut rng)?)
    } else {
        None
    };
    let (replay_ok, verified) = replay_log(&out.log, sc);
    let metrics = json!({
        "m": p.m,
        "lit": lit,
        "risk": risk,
        "k": out.record.size(),
        "passes": out.passes,
        "queries": out.log.count(),
        "query_cap": p.m * (lit + 1),
        "bound": bound,
        "empirical_loss": empirical_loss(&table, &sample, sc),
        "replay_matches": replay(&out.record, &factory) == table,
        "stable": stability.as_ref().map(|s| s.stable),
        "stability_runs": stability.as_ref().map(|s| s.checked),
        "replay_ok": replay_ok,
        "verified": verified,
    });
    Ok(row(suite, &sc.name, trial, seed, metrics, violated))
}

pub struct RluaParams {
    pub m: usize,
    pub n: Option<usize>,
    pub rounds: Option<usize>,
    pub sparse: Option<usize>,
    pub delta: f64,
    pub pass_cap: Option<usize>,
}

impl RluaParams {
    fn config(&self, sc: &Scenario) -> RluaConfig {
        RluaConfig {
            n: self.n,
            rounds: self.rounds,
            alpha: None,
            sparse: self.sparse,
            vc_hint: vc_dimension(&sc.class),
            pass_cap: self.pass_cap.unwrap_or(default_pass_cap(sc.lit())),
        }
    }
}

/// RLUA on `m` draws. A run that fails to boost or sparsify counts as a violation.
pub fn rlua_trial(suite: &str, sc: &Scenario, p: &RluaParams, trial: usize, seed: u64) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = sample_with(&sc.dist, p.m, &mut rng);
    let factory = SoaFactory::new(sc.shared.clone());
    let oracle = CanonicalOracle::new(sc.u.clone());
    let config = p.config(sc);
    let out = match rlua_learn(&sample, sc.space(), &config, &factory, &oracle, &mut rng) {
        Ok(out) => out,
        Err(e @ (Error::BoostFailure(_) | Error::SparsifyFailure { .. })) => {
            let metrics = json!({"m": p.m, "opt": sc.opt, "failed": e.to_string()});
            return Ok(row(suite, &sc.name, trial, seed, metrics, true));
        }
        Err(e) => return Err(e),
    };
    let table = *out.predictor.table();
    let risk = robust_risk(&table, &sc.dist, &sc.u);
    let k = out.compression.len();
    let bound = crate::compress::robust_compression_bound(p.m, k, p.delta).ok();
    let violated = bound.is_some_and(|b| risk > b);
    let found: std::collections::HashSet<Vec<bool>> =
        out.dset.points.iter().map(|q| error_pattern(&out.pool, q.z, q.y)).collect();
    let brute = brute_force_patterns(&sample, &out.pool, &sc.u);
    let sauer = sauer_count(out.pool_size, out.pool_dual_vc);
    let per_label_ok = [Label::Neg, Label::Pos]
        .iter()
        .all(|&y| out.dset.points.iter().filter(|q| q.y == y).count() as f64 <= sauer);
    let (replay_ok, verified) = replay_log(&out.log, sc);
    let metrics = json!({
        "m": p.m,
        "n": out.n,
        "N": out.sparse,
        "T": out.rounds,
        "risk": risk,
        "opt": sc.opt,
        "pool_size": out.pool_size,
        "pool_dual_vc": out.pool_dual_vc,
        "dset_size": out.dset_size,
        "queries": out.log.count(),
        "compression_size": k,
        "bound": bound,
        "margin": out.margin,
        "margin_ok": out.margin >= MIN_MARGIN,
        "patterns_match": found == brute,
        "sauer_ok": per_label_ok,
        "empirical_loss": empirical_loss(&table, &sample, sc),
        "replay_ok": replay_ok,
        "verified": verified,
        "failed": serde_json::Value::Null,
    });
    Ok(row(suite, &sc.name, trial, seed, metrics, violated))
}

/// Agnostic reduction on `m` draws, compared with the brute-force optimum on the sample.
pub fn rlua_agnostic_trial(suite: &str, sc: &Scenario, p: &RluaParams, trial: usize, seed: u64) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = sample_with(&sc.dist, p.m, &mut rng);
    let factory = SoaFactory::new(sc.shared.clone());
    let oracle = CanonicalOracle::new(sc.u.clone());
    let config = ConfidenceConfig { inner: p.config(sc), weak_sample: None, rounds: None, delta: p.delta };
    let opt_sample = brute_opt_stream(&sc.class, &sample, &sc.u)? as f64 / p.m as f64;
    let out = match agnostic_reduce(&sample, &sc.class, &config, &factory, &oracle, &mut rng) {
        Ok(out) => out,
        Err(e @ Error::ConfidenceBoostFailure { .. }) => {
            let metrics = json!({"m": p.m, "opt_sample": opt_sample, "failed": e.to_string()});
            return Ok(row(suite, &sc.name, trial, seed, metrics, true));
        }
        Err(e) => return Err(e),
    };
    let table = *out.predictor.table();
    let loss = empirical_loss(&table, &sample, sc);
    let equal = (loss - opt_sample).abs() < 1e-12;
    let (replay_ok, verified) = replay_log(&out.log, sc);
    let metrics = json!({
        "m": p.m,
        "empirical_loss": loss,
        "opt_sample": opt_sample,
        "equal": equal,
        "at_most_opt": loss <= opt_sample + 1e-12,
        "kept": out.kept.len(),
        "empty_fallback": out.empty_fallback,
        "subsets_tried": out.subsets_tried,
        "risk": robust_risk(&table, &sc.dist, &sc.u),
        "opt": sc.opt,
        "queries": out.log.count(),
        "replay_ok": replay_ok,
        "verified": verified,
        "failed": serde_json::Value::Null,
    });
    Ok(row(suite, &sc.name, trial, seed, metrics, !equal))
}

/// Builds a stream of length `len`: half the rounds are draws from the
/// scenario distribution, the rest pick a random point and the label that
/// makes the learner's current vote wrong on `U(x)`.
pub fn adversarial_stream<F>(sc: &Scenario, len: usize, rng: &mut ChaCha8Rng, mut vote: F) -> Result<Vec<LabeledExample>>
where
    F: FnMut(&[LabeledExample]) -> Result<TruthTable>,
{
    let mut stream = Vec::with_capacity(len);
    for _ in 0..len {
        if rng.gen_bool(0.5) {
            stream.push(sample_with(&sc.dist, 1, rng)[0]);
            continue;
        }
        let x = rng.gen_range(0..sc.space().size());
        let v = vote(&stream)?;
        let m = sc.u.mask(x);
        let y = if m & v.positives() == m {
            Label::Neg
        } else if m & v.negatives() == m {
            Label::Pos
        } else {
            Label::from_bool(rng.gen_bool(0.5))
        };
        stream.push(LabeledExample::new(x, y));
    }
    Ok(stream)
}

fn next_vote(run: &WmResult) -> TruthTable {
    *run.tables.last().expect("probe round recorded")
}

/// Appended to a prefix so the run records the vote for the next round.
const PROBE: LabeledExample = LabeledExample { x: 0, y: Label::Pos };

pub struct WmParams {
    pub horizon: usize,
    pub eta: Option<f64>,
    pub experts: bool,
    /// Run the explicit family next to the aggregated one when it fits.
    pub explicit: bool,
}

/// Weighted Majority on an adversarial stream. Over the class the check is
/// `M <= a OPT + b ln|H|`; over the experts it is the tuned bound, or the
/// raw bound when `OPT = 0`.
pub fn wm_trial(suite: &str, sc: &Scenario, p: &WmParams, trial: usize, seed: u64) -> Result<TrialResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracle = CanonicalOracle::new(sc.u.clone());
    let t = p.horizon;
    if !p.experts {
        let eta = p.eta.unwrap_or(0.5);
        let stream = adversarial_stream(sc, t, &mut rng, |prefix| {
            let mut probe_stream = prefix.to_vec();
            probe_stream.push(PROBE);
            Ok(next_vote(&wm_finite(&sc.class, &probe_stream, eta, &oracle)?))
        })?;
        let run = wm_finite(&sc.class, &stream, eta, &oracle)?;
        let opt = brute_opt_stream(&sc.class, &stream, &sc.u)?;
        let ln_n = (sc.class.len() as f64).ln();
        let bound = raw_bound(eta, opt, ln_n)?;
        let best_ok = run.log_best >= opt as f64 * eta.ln() - 1e-9;
        let (replay_ok, verified) = replay_log(&run.log, sc);
        let metrics = json!({
            "T": t,
            "eta": eta,
            "M": run.mistakes,
            "OPT": opt,
            "bound": bound,
            "family_size": sc.class.len(),
            "contraction_ok": run.contraction_holds(),
            "best_weight_ok": best_ok,
            "replay_ok": replay_ok,
            "verified": verified,
        });
        let violated = run.mistakes as f64 > bound + 1e-9 || !run.contraction_holds() || !best_ok;
        return Ok(row(suite, &sc.name, trial, seed, metrics, violated));
    }
    let lit = sc.lit();
    let ln_n = ln_expert_family_size(lit, t);
    let eta = p.eta.unwrap_or_else(|| default_eta(ln_n, t));
    let stream = adversarial_stream(sc, t, &mut rng, |prefix| {
        let mut probe_stream = prefix.to_vec();
        probe_stream.push(PROBE);
        Ok(next_vote(&wm_experts_aggregated(&sc.shared, lit, t, &probe_stream, eta, &oracle)?))
    })?;
    let run = wm_experts_aggregated(&sc.shared, lit, t, &stream, eta, &oracle)?;
    let explicit = if p.explicit && expert_family_size(lit, t) <= MAX_EXPERTS as f64 {
        let family = make_expert_family(lit, t)?;
        Some(wm_experts(&sc.shared, &family, &stream, eta, &oracle)?)
    } else {
        None
    };
    let opt = brute_opt_stream(&sc.class, &stream, &sc.u)?;
    let raw = raw_bound(eta, opt, ln_n)?;
    let tuned = tuned_bound(opt, ln_n);
    let bound = if opt == 0 { raw } else { tuned };
    let agree = explicit.as_ref().map(|e| {
        e.mistakes == run.mistakes
            && e.tables == run.tables
            && e.log_total.iter().zip(&run.log_total).all(|(a, b)| (a - b).abs() < 1e-6)
    });
    let best_ok = run.log_best >= opt as f64 * eta.ln() - 1e-9;
    let (replay_ok, verified) = replay_log(&run.log, sc);
    let metrics = json!({
        "T": t,
        "eta": eta,
        "lit": lit,
        "M": run.mistakes,
        "OPT": opt,
        "bound": bound,
        "raw_bound": raw,
        "tuned_bound": tuned,
        "family_size": expert_family_size(lit, t),
        "contraction_ok": run.contraction_holds(),
        "explicit_agrees": agree,
        "best_weight_ok": best_ok,
        "replay_ok": replay_ok,
        "verified": verified,
    });
    let violated = run.mistakes as f64 > bound + 1e-9 || agree == Some(false) || !best_ok;
    Ok(row(suite, &sc.name, trial, seed, metrics, violated))
}

/// Online-to-batch conversion at the sample size for `(eps, delta)`.
pub fn online_to_batch_trial(suite: &str, sc: &Scenario, eps: f64, delta: f64, trial: usize, seed: u64) -> Result<TrialResult> {
    let oracle = CanonicalOracle::new(sc.u.clone());
    let m = online_to_batch_sample_size(eps, delta, sc.lit());
    let out = online_to_batch(&sc.shared, &sc.dist, &sc.u, &oracle, m, seed)?;
    let bound = 2.0 * out.opt + eps;
    let (replay_ok, verified) = replay_log(&out.log, sc);
    let metrics = json!({
        "m": m,
        "lit": sc.lit(),
        "mixture_risk": out.mixture_risk,
        "opt": out.opt,
        "bound": bound,
        "M": out.mistakes,
        "replay_ok": replay_ok,
        "verified": verified,
    });
    Ok(row(suite, &sc.name, trial, seed, metrics, out.mixture_risk > bound))
}

/// SOA against a stationary attacker for `horizon` rounds.
pub fn game_trial(
    suite: &str,
    sc: &Scenario,
    attacker: &str,
    horizon: usize,
    pretrain: usize,
    trial: usize,
    seed: u64,
) -> Result<TrialResult> {
    let att = attacker_by_name(attacker, &sc.u)?;
    let mut learner = crate::online::Soa::new(sc.shared.clone());
    let tr = attack_game(&mut learner, att.as_ref(), &sc.dist, &sc.u, horizon, pretrain, seed)?;
    let honest = att.contract() == AttackerContract::MembershipHonest;
    let members_ok = !honest || tr.rounds.iter().all(|r| sc.u.contains(r.x, r.z));
    let lit = sc.lit();
    let metrics = json!({
        "attacker": attacker,
        "horizon": horizon,
        "pretrain": pretrain,
        "lit": lit,
        "successes": tr.successes(),
        "updates": learner.updates(),
        "replay_ok": members_ok,
        "verified": if honest { tr.rounds.len() } else { 0 },
    });
    Ok(row(suite, &sc.name, trial, seed, metrics, tr.successes() > lit || !members_ok))
}

/// `reps` threshold games for one `(d, strategy)`, summarized in one row.
pub fn lowerbound_row(suite: &str, d: usize, strategy: LbStrategy, reps: usize, index: usize, seed: u64) -> Result<TrialResult> {
    let shared = SoaShared::new(Arc::new(game_class(d)?));
    let outcomes: Vec<_> = (0..reps)
        .into_par_iter()
        .map(|i| threshold_lower_bound_game(strategy, d, super::trial_seed(seed, "game", i as u64), Some(&shared)))
        .collect::<Result<_>>()?;
    let q: Vec<f64> = outcomes.iter().map(|o| o.queries as f64).collect();
    let mean = q.iter().sum::<f64>() / reps as f64;
    let var = q.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps.max(2) - 1) as f64;
    let se = (var / reps as f64).sqrt();
    let ratios: Vec<f64> = outcomes.iter().flat_map(|o| o.contractions()).collect();
    let contraction = if ratios.is_empty() { 1.0 } else { ratios.iter().sum::<f64>() / ratios.len() as f64 };
    let target = ((d - 1) as f64).log2() / 2.0;
    let metrics = json!({
        "d": d,
        "strategy": strategy,
        "reps": reps,
        "mean_queries": mean,
        "se": se,
        "target": target,
        "max_queries": q.iter().copied().fold(0.0, f64::max),
        "mean_contraction": contraction,
    });
    let violated = mean < target - 2.0 * se || contraction < 0.25;
    Ok(row(suite, &format!("threshold-game-{d}"), index, seed, metrics, violated))
}

/// Survivor learner against a stationary attacker. Violation means the
/// exact attacker error exceeds `eps`.
pub fn imperfect_trial(suite: &str, sc: &Scenario, attacker: &str, eps: f64, delta: f64, trial: usize, seed: u64) -> Result<TrialResult> {
    let att = attacker_by_name(attacker, &sc.u)?;
    let lit = sc.lit();
    let mut learner = crate::online::Soa::new(sc.shared.clone());
    let out = survivor_learn(&mut learner, att.as_ref(), &sc.dist, &sc.u, eps, delta, lit, seed)?;
    let err = attacker_error_exact(&out.table, att.as_ref(), &sc.dist);
    let metrics = json!({
        "attacker": attacker,
        "eps": eps,
        "delta": delta,
        "lit": lit,
        "err": err,
        "updates": out.updates,
        "rounds": out.rounds,
        "streak": out.streak,
        "cap": out.cap,
        "updates_ok": out.updates <= lit,
        "rounds_ok": out.rounds <= out.cap,
    });
    Ok(row(suite, &sc.name, trial, seed, metrics, err > eps))
}
