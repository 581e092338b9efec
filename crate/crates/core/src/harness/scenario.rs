//! Seeded scenario generators.

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::online::SoaShared;
use crate::perturb::{opt_robust_risk, PerturbationSet};
use crate::universe::{
    make_threshold_class, parse_class, parse_distribution, FiniteDistribution, HypothesisClass, InstanceSpace, Label,
    LabeledExample, TruthTable,
};

/// Text given inline or read from a file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Inline(String),
    File(PathBuf),
}

impl Source {
    pub fn read(&self) -> Result<String> {
        match self {
            Source::Inline(s) => Ok(s.clone()),
            Source::File(p) => std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// `H_n` on `n` points with `U(x) = {x-1, x, x+1}`.
    Thresholds { n: usize },
    /// `rows` distinct random tables on `instances` points; each `U(x)` holds
    /// `x` plus every other point with probability `u_density`.
    RandomClass { instances: usize, rows: usize, u_density: f64 },
    /// All `2^k` tables on `k` points with a random `U` of density 0.5.
    FullCube { k: usize },
    Custom { class: Source, perturbation: Source, distribution: Option<Source> },
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(flatten)]
    pub kind: ScenarioKind,
    #[serde(default = "default_true")]
    pub realizable: bool,
    /// Number of clean atoms; `None` picks up to 6.
    #[serde(default)]
    pub atoms: Option<usize>,
    /// Probability mass moved to flipped labels in non-realizable scenarios.
    #[serde(default)]
    pub noise: Option<f64>,
}

impl ScenarioSpec {
    pub fn realizable(kind: ScenarioKind) -> Self {
        Self { kind, realizable: true, atoms: None, noise: None }
    }

    pub fn agnostic(kind: ScenarioKind, noise: f64) -> Self {
        Self { kind, realizable: false, atoms: None, noise: Some(noise) }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub class: Arc<HypothesisClass>,
    pub u: PerturbationSet,
    pub dist: FiniteDistribution,
    pub opt: f64,
    pub realizable: bool,
    /// Row the clean labels came from, when generated.
    pub target: Option<usize>,
    pub shared: Arc<SoaShared>,
}

impl Scenario {
    pub fn space(&self) -> InstanceSpace {
        self.class.space()
    }

    pub fn lit(&self) -> usize {
        self.shared.lit().class_lit()
    }

    pub fn from_parts(name: &str, class: HypothesisClass, u: PerturbationSet, dist: FiniteDistribution) -> Result<Self> {
        if u.space() != class.space() {
            return Err(Error::invalid("class and perturbation sets live on different spaces"));
        }
        dist.check_space(class.space())?;
        let (opt, _) = opt_robust_risk(&class, &dist, &u);
        let class = Arc::new(class);
        Ok(Self {
            name: name.to_string(),
            shared: SoaShared::new(class.clone()),
            class,
            u,
            dist,
            opt,
            realizable: opt == 0.0,
            target: None,
        })
    }
}

const MAX_REGENERATIONS: usize = 100;

/// Builds a scenario from `spec`; the same seed always gives the same scenario.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(noise) = spec.noise {
        if !(0.0..1.0).contains(&noise) {
            return Err(Error::invalid(format!("noise must be in [0,1), got {noise}")));
        }
    }
    if spec.atoms == Some(0) {
        return Err(Error::invalid("atoms must be positive"));
    }
    for _ in 0..MAX_REGENERATIONS {
        let (name, class, u, given) = match &spec.kind {
            ScenarioKind::Thresholds { n } => {
                let class = make_threshold_class(*n)?;
                (format!("thresholds-{n}"), class.clone(), PerturbationSet::neighbors(class.space()), None)
            }
            ScenarioKind::RandomClass { instances, rows, u_density } => {
                if !(0.0..=1.0).contains(u_density) {
                    return Err(Error::invalid(format!("u_density must be in [0,1], got {u_density}")));
                }
                let space = InstanceSpace::new(*instances)?;
                if *rows == 0 || (*instances < 63 && *rows as u64 > 1u64 << instances) {
                    return Err(Error::invalid(format!("cannot draw {rows} distinct rows on {instances} points")));
                }
                let mut seen = std::collections::BTreeSet::new();
                while seen.len() < *rows {
                    seen.insert(rng.gen::<u64>() & space.full_mask());
                }
                let mut tables: Vec<TruthTable> = seen.into_iter().map(|p| TruthTable::new(*instances, p)).collect();
                tables.shuffle(&mut rng);
                let class = HypothesisClass::new(space, tables)?;
                let u = PerturbationSet::random(space, *u_density, true, &mut rng);
                (format!("random-{instances}x{rows}"), class, u, None)
            }
            ScenarioKind::FullCube { k } => {
                let class = HypothesisClass::full_cube(*k)?;
                let u = PerturbationSet::random(class.space(), 0.5, true, &mut rng);
                (format!("cube-{k}"), class, u, None)
            }
            ScenarioKind::Custom { class, perturbation, distribution } => {
                let class = parse_class(&class.read()?)?;
                let u = PerturbationSet::parse(&perturbation.read()?)?;
                let dist = distribution.as_ref().map(|d| d.read().and_then(|t| parse_distribution(&t))).transpose()?;
                ("custom".to_string(), class, u, dist)
            }
        };
        if let Some(dist) = given {
            let sc = Scenario::from_parts(&name, class, u, dist)?;
            if spec.realizable && !sc.realizable {
                return Err(Error::invalid(format!("custom scenario is not realizable (opt = {})", sc.opt)));
            }
            return Ok(sc);
        }
        let target = rng.gen_range(0..class.len());
        let Some(dist) = draw_distribution(&class, &u, target, spec, &mut rng)? else {
            continue;
        };
        let mut sc = Scenario::from_parts(&name, class, u, dist)?;
        sc.target = Some(target);
        if sc.realizable == spec.realizable {
            return Ok(sc);
        }
    }
    Err(Error::invalid(format!(
        "no {} scenario after {MAX_REGENERATIONS} attempts",
        if spec.realizable { "realizable" } else { "non-realizable" }
    )))
}

/// Clean atoms sit on points where the target is constant over `U(x)`;
/// noise atoms carry the opposite label.
fn draw_distribution(
    class: &HypothesisClass,
    u: &PerturbationSet,
    target: usize,
    spec: &ScenarioSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Option<FiniteDistribution>> {
    let h = class.row(target);
    let n = class.space().size();
    let mut clean: Vec<LabeledExample> = (0..n)
        .filter_map(|x| {
            let m = u.mask(x);
            if m & h.positives() == m {
                Some(LabeledExample::new(x, Label::Pos))
            } else if m & h.negatives() == m {
                Some(LabeledExample::new(x, Label::Neg))
            } else {
                None
            }
        })
        .collect();
    if clean.is_empty() {
        return Ok(None);
    }
    clean.shuffle(rng);
    clean.truncate(spec.atoms.unwrap_or(6).min(clean.len()));
    let mut atoms: Vec<(LabeledExample, f64)> = clean.iter().map(|ex| (*ex, rng.gen_range(0.2..1.0))).collect();
    if !spec.realizable {
        let noise = spec.noise.unwrap_or(0.2);
        let clean_mass: f64 = atoms.iter().map(|a| a.1).sum();
        let flips = rng.gen_range(1..=2.min(n));
        let mut xs: Vec<usize> = (0..n).collect();
        xs.shuffle(rng);
        let mut noisy = Vec::new();
        for &x in xs.iter().take(flips) {
            let y = match clean.iter().find(|e| e.x == x) {
                Some(e) => e.y.flip(),
                None => h.eval(x).flip(),
            };
            noisy.push(LabeledExample::new(x, y));
        }
        let each = noise * clean_mass / (1.0 - noise) / noisy.len() as f64;
        atoms.extend(noisy.into_iter().map(|ex| (ex, each)));
    }
    FiniteDistribution::from_weights(atoms).map(Some)
}

/// Scenario kinds with `lit <= 3`, cycled by index.
pub fn lit3_mix(i: usize) -> ScenarioKind {
    match i % 4 {
        0 => ScenarioKind::Thresholds { n: 8 },
        1 => ScenarioKind::RandomClass { instances: 8, rows: 12, u_density: 0.3 },
        2 => ScenarioKind::FullCube { k: 3 },
        _ => ScenarioKind::RandomClass { instances: 10, rows: 15, u_density: 0.15 },
    }
}
