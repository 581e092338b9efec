use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use robustlearn::games::LbStrategy;
use robustlearn::harness::{
    self, generate_scenario, run_acceptance, AcceptanceConfig, AlgorithmParams, CycleParams, ExperimentConfig,
    RluaParams, Scenario, ScenarioKind, ScenarioSpec, Source, TrialResult, WmParams,
};
use robustlearn::online::{parse_sequence, run_sequence, Soa};
use robustlearn::perturb::{attack_check, PerturbationSet, QueryLog};
use robustlearn::universe::{dimension_report, parse_class};

#[derive(Parser)]
#[command(name = "robustlearn", version, about = "Robust learning with attack oracles on finite spaces")]
struct Cli {
    /// Master seed; per-trial seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write rows here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment config (JSON); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Add wall-clock times to rows (output is then no longer reproducible).
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Files {
    /// Class file (`instances n` then one +/- row per hypothesis).
    class: Option<PathBuf>,
    /// Perturbation file (`u x : z1 z2 ...`).
    upset: Option<PathBuf>,
    /// Distribution file (`atom x y p`).
    dist: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Dimension report of a class.
    Dims { class: PathBuf },
    /// CycleRobust trials.
    Cyclerobust {
        #[command(flatten)]
        files: Files,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        pass_cap: Option<usize>,
    },
    /// RLUA trials.
    Rlua(RluaArgs),
    /// Agnostic reduction trials.
    RluaAgnostic(RluaArgs),
    /// Weighted Majority on adversarial streams.
    Wm {
        #[command(flatten)]
        files: Files,
        #[arg(long = "T")]
        horizon: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        /// Use the SOA expert family instead of the class rows.
        #[arg(long)]
        experts: bool,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// SOA against a stationary attacker.
    Game {
        #[command(flatten)]
        files: Files,
        #[arg(long)]
        attacker: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        pretrain: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Threshold-game query counts.
    Lowerbound {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value = "binary-search")]
        strategy: String,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
    },
    /// Survivor learner against an imperfect attacker.
    Imperfect {
        #[command(flatten)]
        files: Files,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        attacker: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Acceptance suite by name or number, or `all`.
    Accept {
        suite: String,
        /// Multiplies the trial counts (1.0 runs the full counts).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Re-verifies every response of a JSON-lines query log.
    AttackCheck { log: PathBuf, upset: PathBuf },
    /// Runs the SOA on a labeled sequence and prints its mistake record.
    OnlineGame { class: PathBuf, seq: PathBuf },
}

#[derive(Args)]
struct RluaArgs {
    #[command(flatten)]
    files: Files,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "T")]
    rounds: Option<usize>,
    #[arg(long = "N")]
    sparse: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
}

const DEFAULT_SEED: u64 = 20240101;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

struct Ctx {
    seed: u64,
    trials: usize,
    params: AlgorithmParams,
    spec: Option<ScenarioSpec>,
    timings: bool,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let cfg = cli.config.as_deref().map(|p| read(p).and_then(|t| Ok(ExperimentConfig::from_json(&t)?))).transpose()?;
        Ok(Self {
            seed: cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(DEFAULT_SEED),
            trials: cfg.as_ref().map_or(1, |c| c.trials),
            params: cfg.as_ref().map(|c| c.params.clone()).unwrap_or_default(),
            spec: cfg.map(|c| c.scenario),
            timings: cli.timings,
        })
    }

    /// Files on the command line win over the config scenario.
    fn scenario(&self, files: &Files) -> Result<Scenario> {
        let spec = match (&files.class, &files.upset) {
            (Some(class), Some(upset)) => ScenarioSpec {
                kind: ScenarioKind::Custom {
                    class: Source::File(class.clone()),
                    perturbation: Source::File(upset.clone()),
                    distribution: files.dist.clone().map(Source::File),
                },
                realizable: files.dist.is_none(),
                atoms: None,
                noise: None,
            },
            (None, None) => self.spec.clone().context("give class and perturbation files or a --config scenario")?,
            _ => bail!("class and perturbation files go together"),
        };
        Ok(generate_scenario(&spec, self.seed)?)
    }

    fn run<F>(&self, suite: &str, trials: Option<usize>, f: F) -> Result<Vec<TrialResult>>
    where
        F: Fn(usize, u64) -> robustlearn::Result<TrialResult> + Sync,
    {
        Ok(harness::run_trials(suite, self.seed, trials.unwrap_or(self.trials), self.timings, f)?)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global()?;
    }
    let ctx = Ctx::new(&cli)?;
    let out = cli.out.as_deref();
    let p = &ctx.params;
    let rows = match &cli.command {
        Command::Dims { class } => {
            let class = parse_class(&read(class)?)?;
            emit(out, &(serde_json::to_string_pretty(&dimension_report(&class))? + "\n"))?;
            return Ok(0);
        }
        Command::Cyclerobust { files, m, delta, trials, pass_cap } => {
            let sc = ctx.scenario(files)?;
            let params = CycleParams {
                m: m.or(p.m).unwrap_or(50),
                delta: delta.or(p.delta).unwrap_or(0.1),
                stability_draws: 0,
                pass_cap: pass_cap.or(p.pass_cap),
            };
            ctx.run("cyclerobust", *trials, |i, s| harness::cyclerobust_trial("cyclerobust", &sc, &params, i, s))?
        }
        Command::Rlua(a) | Command::RluaAgnostic(a) => {
            let agnostic = matches!(cli.command, Command::RluaAgnostic(_));
            let sc = ctx.scenario(&a.files)?;
            let params = RluaParams {
                m: a.m.or(p.m).unwrap_or(if agnostic { 10 } else { 30 }),
                n: a.n.or(p.n),
                rounds: a.rounds.or(p.rounds),
                sparse: a.sparse.or(p.sparse),
                delta: a.delta.or(p.delta).unwrap_or(0.1),
                pass_cap: p.pass_cap,
            };
            if agnostic {
                ctx.run("rlua-agnostic", a.trials, |i, s| harness::rlua_agnostic_trial("rlua-agnostic", &sc, &params, i, s))?
            } else {
                ctx.run("rlua", a.trials, |i, s| harness::rlua_trial("rlua", &sc, &params, i, s))?
            }
        }
        Command::Wm { files, horizon, eta, experts, trials } => {
            let sc = ctx.scenario(files)?;
            let params = WmParams {
                horizon: horizon.or(p.horizon).or(p.rounds).unwrap_or(30),
                eta: eta.or(p.eta),
                experts: *experts || p.experts.unwrap_or(false),
                explicit: true,
            };
            ctx.run("wm", *trials, |i, s| harness::wm_trial("wm", &sc, &params, i, s))?
        }
        Command::Game { files, attacker, horizon, pretrain, trials } => {
            let sc = ctx.scenario(files)?;
            let attacker = attacker.clone().or(p.attacker.clone()).unwrap_or_else(|| "greedy".into());
            let horizon = horizon.or(p.horizon).unwrap_or(1000);
            let pretrain = pretrain.or(p.pretrain).unwrap_or(0);
            ctx.run("game", *trials, |i, s| harness::game_trial("game", &sc, &attacker, horizon, pretrain, i, s))?
        }
        Command::Lowerbound { d, strategy, reps } => {
            let strategy: LbStrategy = strategy.parse()?;
            vec![harness::lowerbound_row("lowerbound", *d, strategy, *reps, 0, ctx.seed)?]
        }
        Command::Imperfect { files, eps, delta, attacker, trials } => {
            let sc = ctx.scenario(files)?;
            let attacker = attacker.clone().or(p.attacker.clone()).unwrap_or_else(|| "uniform".into());
            let eps = eps.or(p.eps).unwrap_or(0.2);
            let delta = delta.or(p.delta).unwrap_or(0.2);
            ctx.run("imperfect", *trials, |i, s| harness::imperfect_trial("imperfect", &sc, &attacker, eps, delta, i, s))?
        }
        Command::Accept { suite, scale } => {
            let cfg = AcceptanceConfig { seed: ctx.seed, timings: ctx.timings, scale: *scale };
            let reports = run_acceptance(suite, &cfg)?;
            for r in &reports {
                eprintln!("{}", r.line());
            }
            let lines: String = reports.iter().map(|r| r.json_lines()).collect();
            let doc = serde_json::json!({
                "seed": ctx.seed,
                "passed": reports.iter().all(|r| r.passed),
                "criteria": reports.iter().map(|r| r.document()).collect::<Vec<_>>(),
            });
            match out {
                Some(p) => {
                    emit(Some(p), &lines)?;
                    println!("{}", serde_json::to_string_pretty(&doc)?);
                }
                None => emit(None, &lines)?,
            }
            return Ok(if reports.iter().all(|r| r.passed) { 0 } else { 1 });
        }
        Command::AttackCheck { log, upset } => {
            let log = QueryLog::from_json_lines(&read(log)?)?;
            let u = PerturbationSet::parse(&read(upset)?)?;
            let checked = attack_check(&log, &u)?;
            emit(out, &(serde_json::json!({"verified": checked}).to_string() + "\n"))?;
            return Ok(0);
        }
        Command::OnlineGame { class, seq } => {
            let class = parse_class(&read(class)?)?;
            let seq = parse_sequence(&read(seq)?)?;
            let mut learner = Soa::new(robustlearn::online::SoaShared::new(std::sync::Arc::new(class)));
            let record = run_sequence(&mut learner, &seq)?;
            emit(out, &(serde_json::to_string(&record)? + "\n"))?;
            return Ok(0);
        }
    };
    emit(out, &harness::json_lines(&rows))?;
    Ok(0)
}
