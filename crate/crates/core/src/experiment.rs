//! Monte Carlo coverage experiments: configuration, replication, aggregation
//! and result files.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{EstimateReport, EstimatorKind, LoggedDataset, TargetFunctional};
use crate::env::rng::replication_seed;
use crate::env::{
    simulate_bandit, target_learned, AgentConfig, ClassificationTable, EnumerableEnvironment, EpsilonSchedule,
    RewardEnvironment, SyntheticTableSpec,
};
use crate::error::{OpeError, Result};
use crate::estimators::{estimate_with, EstimatorConfig, DEFAULT_VARIANCE_FLOOR};
use crate::models::{predict_rounds, Engine, EngineChoice, RoundPredictions, Schedule, TrainingSchedule, TreeConfig};

pub const RESULTS_HEADER: &str =
    "dataset,target,estimator,R,coverage,coverage_se,mean_width,bias,rmse,floor_hits,failures,seconds";

/// Cross-propensity tables up to this many entries are precomputed once per
/// replication and shared by every stabilized estimator.
const MATERIALIZE_LIMIT: usize = 32 << 20;

/// Where contexts and rewards come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Table { path: PathBuf },
    Synthetic(SyntheticTableSpec),
    Enumerable { path: PathBuf },
}

/// Target policy selector as written in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSpec {
    Arm(usize),
    Uniform,
    Learned(Engine),
    Contrast(usize, usize),
}

impl FromStr for TargetSpec {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || OpeError::Config(format!("unknown target `{s}`"));
        let (head, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let arm = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        match head {
            "arm" => Ok(TargetSpec::Arm(arm(rest)?)),
            "uniform" if rest.is_empty() => Ok(TargetSpec::Uniform),
            "learned" => Ok(TargetSpec::Learned(rest.parse().map_err(|_| bad())?)),
            "contrast" => {
                let inner = rest.trim().trim_start_matches('(').trim_end_matches(')');
                let (a, b) = inner.split_once(',').ok_or_else(bad)?;
                Ok(TargetSpec::Contrast(arm(a)?, arm(b)?))
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetSpec::Arm(k) => write!(f, "arm:{k}"),
            TargetSpec::Uniform => f.write_str("uniform"),
            TargetSpec::Learned(e) => write!(f, "learned:{e}"),
            TargetSpec::Contrast(a, b) => write!(f, "contrast:{a},{b}"),
        }
    }
}

impl Serialize for TargetSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TargetSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(OpeError::Config(format!("unknown output format `{s}`"))),
        }
    }
}

/// The ε-greedy logging agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSpec {
    pub engine: Engine,
    pub refit_every: usize,
    pub max_depth: Option<usize>,
}

impl Default for AgentSpec {
    fn default() -> Self {
        Self {
            engine: Engine::Tree,
            refit_every: 1,
            max_depth: None,
        }
    }
}

fn engine_choice(engine: Engine, max_depth: Option<usize>) -> EngineChoice {
    EngineChoice {
        engine,
        tree: TreeConfig {
            max_depth,
            ..TreeConfig::default()
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset id for the results; defaults to the source file stem or `synthetic`.
    #[serde(default)]
    pub name: Option<String>,
    pub source: SourceSpec,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub replications: usize,
    pub estimators: Vec<EstimatorKind>,
    pub targets: Vec<TargetSpec>,
    /// `sequential`, `sequential:N` or `crosstime:F`.
    #[serde(default = "default_training")]
    pub training: String,
    #[serde(default = "default_outcome_model")]
    pub outcome_model: Engine,
    #[serde(default)]
    pub outcome_max_depth: Option<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub epsilon: EpsilonSchedule,
    #[serde(default)]
    pub agent: AgentSpec,
    /// Rounds of uniform logging used to learn `learned:*` targets; defaults to `T`.
    #[serde(default)]
    pub learned_target_rounds: Option<usize>,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_floor")]
    pub variance_floor: f64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    /// Record wall time in the `seconds` column; off keeps result files reproducible.
    #[serde(default)]
    pub timing: bool,
}

fn default_training() -> String {
    "sequential".into()
}
fn default_outcome_model() -> Engine {
    Engine::Linear
}
fn default_alpha() -> f64 {
    0.05
}
fn default_floor() -> f64 {
    DEFAULT_VARIANCE_FLOOR
}
fn default_parallelism() -> usize {
    1
}

impl ExperimentConfig {
    /// Parses a JSON config; relative source paths resolve against the file's directory.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| OpeError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| OpeError::Config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.source {
            SourceSpec::Table { path } | SourceSpec::Enumerable { path } if path.is_relative() => {
                *path = base.join(&*path);
            }
            _ => {}
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        self.training.parse()
    }

    pub fn check(&self) -> Result<()> {
        let fail = |m: String| Err(OpeError::Config(m));
        if self.replications == 0 {
            return fail("replications must be at least 1".into());
        }
        if self.rounds == 0 {
            return fail("T must be at least 1".into());
        }
        if self.estimators.is_empty() || self.targets.is_empty() {
            return fail("at least one estimator and one target are required".into());
        }
        for (i, k) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(k) {
                return fail(format!("estimator `{k}` listed twice"));
            }
        }
        if self.parallelism == 0 {
            return fail("parallelism must be at least 1".into());
        }
        if self.agent.refit_every == 0 {
            return fail("agent.refit_every must be at least 1".into());
        }
        if self.learned_target_rounds == Some(0) {
            return fail("learned_target_rounds must be at least 1".into());
        }
        self.schedule()?;
        self.epsilon.check()?;
        self.estimator_config(EstimatorKind::Cadr)?.check()
    }

    pub fn estimator_config(&self, kind: EstimatorKind) -> Result<EstimatorConfig> {
        let training = TrainingSchedule {
            schedule: self.schedule()?,
            engine: engine_choice(self.outcome_model, self.outcome_max_depth),
            weighting: Default::default(),
        };
        let mut cfg = EstimatorConfig::new(kind)
            .with_training(training)
            .with_alpha(self.alpha);
        cfg.burn_in = self.burn_in;
        cfg.variance_floor = self.variance_floor;
        Ok(cfg)
    }

    pub fn dataset_id(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.source {
            SourceSpec::Table { path } | SourceSpec::Enumerable { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into()),
            SourceSpec::Synthetic(_) => "synthetic".into(),
        }
    }
}

/// One aggregated result line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub dataset: String,
    pub target: String,
    pub estimator: EstimatorKind,
    /// Replications that produced an estimate.
    #[serde(rename = "R")]
    pub replications: usize,
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_width: f64,
    pub bias: f64,
    pub rmse: f64,
    pub floor_hits: f64,
    pub failures: usize,
    pub seconds: f64,
}

impl CoverageRow {
    /// Number of covering replications.
    pub fn covered(&self) -> usize {
        (self.coverage * self.replications as f64).round() as usize
    }
}

/// A resolved target with its exact value.
#[derive(Debug, Clone)]
pub struct PreparedTarget {
    pub id: String,
    pub functional: TargetFunctional,
    pub truth: f64,
}

#[derive(Debug, Clone)]
struct Outcome {
    psi_hat: f64,
    width: f64,
    covered: bool,
    floor_hits: usize,
}

type Cell = (Result<Outcome, String>, f64);

/// Loads the source named by `cfg`.
pub fn load_environment(cfg: &ExperimentConfig) -> Result<Box<dyn RewardEnvironment>> {
    Ok(match &cfg.source {
        SourceSpec::Table { path } => {
            let f = std::fs::File::open(path).map_err(|e| OpeError::Data(format!("{}: {e}", path.display())))?;
            Box::new(ClassificationTable::read_csv(std::io::BufReader::new(f))?)
        }
        SourceSpec::Synthetic(spec) => Box::new(ClassificationTable::synthetic(spec)?),
        SourceSpec::Enumerable { path } => Box::new(EnumerableEnvironment::from_json_file(path)?),
    })
}

/// Builds each target once per experiment; learned targets use the `Target`
/// stream of the master seed and stay fixed across replications.
pub fn prepare_targets(cfg: &ExperimentConfig, env: &dyn RewardEnvironment) -> Result<Vec<PreparedTarget>> {
    let k = env.arms();
    cfg.targets
        .iter()
        .map(|spec| {
            let functional = match *spec {
                TargetSpec::Arm(a) => TargetFunctional::arm(a, k),
                TargetSpec::Uniform => Ok(TargetFunctional::Uniform { arms: k }),
                TargetSpec::Contrast(a, b) => TargetFunctional::contrast(a, b, k),
                TargetSpec::Learned(engine) => target_learned(
                    env,
                    cfg.learned_target_rounds.unwrap_or(cfg.rounds),
                    engine_choice(engine, cfg.outcome_max_depth),
                    cfg.seed,
                ),
            }
            .map_err(|e| OpeError::Config(format!("target `{spec}`: {e}")))?;
            Ok(PreparedTarget {
                id: spec.to_string(),
                truth: env.policy_value(&functional),
                functional,
            })
        })
        .collect()
}

/// Runs every replication and aggregates one row per (target, estimator), in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<CoverageRow>> {
    cfg.check()?;
    let env = load_environment(cfg)?;
    let targets = prepare_targets(cfg, env.as_ref())?;
    let configs = cfg
        .estimators
        .iter()
        .map(|&k| cfg.estimator_config(k))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| OpeError::Config(format!("thread pool: {e}")))?;
    let cells: Vec<Vec<Cell>> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, env.as_ref(), &targets, &configs, r as u64))
            .collect()
    });
    Ok(aggregate(cfg, &targets, &cells))
}

fn run_replication(
    cfg: &ExperimentConfig,
    env: &dyn RewardEnvironment,
    targets: &[PreparedTarget],
    configs: &[EstimatorConfig],
    r: u64,
) -> Vec<Cell> {
    let n = targets.len() * configs.len();
    let agent = AgentConfig {
        engine: engine_choice(cfg.agent.engine, cfg.agent.max_depth),
        refit_every: cfg.agent.refit_every,
    };
    let seed = replication_seed(cfg.seed, r);
    let ds = simulate_bandit(env, cfg.rounds, &cfg.epsilon, &agent, seed).and_then(|ds| {
        let needs_cross = configs.iter().any(|c| c.kind.is_stabilized());
        if needs_cross && ds.len() * (ds.len() + 1) / 2 <= MATERIALIZE_LIMIT {
            ds.into_matrix_form()
        } else {
            Ok(ds)
        }
    });
    let ds = match ds {
        Ok(ds) => ds,
        Err(e) => {
            log::warn!("replication {r}: simulation failed: {e}");
            return vec![(Err(e.to_string()), 0.0); n];
        }
    };
    let mut cells = Vec::with_capacity(n);
    // Target-independent predictions are shared across targets.
    let mut shared: HashMap<&'static str, std::result::Result<RoundPredictions, String>> = HashMap::new();
    for target in targets {
        let mut local: HashMap<&'static str, std::result::Result<RoundPredictions, String>> = HashMap::new();
        for ecfg in configs {
            let start = Instant::now();
            let report = run_one(&ds, target, ecfg, &mut shared, &mut local);
            let seconds = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
            let outcome = report.map(|rep| Outcome {
                psi_hat: rep.psi_hat,
                width: rep.width(),
                covered: rep.covers(target.truth),
                floor_hits: rep.diagnostics.floor_hits,
            });
            if let Err(e) = &outcome {
                log::warn!("replication {r}, {} / {}: {e}", target.id, ecfg.kind);
            }
            cells.push((outcome, seconds));
        }
    }
    cells
}

fn run_one<'a>(
    ds: &LoggedDataset,
    target: &PreparedTarget,
    ecfg: &EstimatorConfig,
    shared: &'a mut HashMap<&'static str, std::result::Result<RoundPredictions, String>>,
    local: &'a mut HashMap<&'static str, std::result::Result<RoundPredictions, String>>,
) -> std::result::Result<EstimateReport, String> {
    let zeros;
    let preds = match ecfg.training_for_kind() {
        None => {
            zeros = RoundPredictions::zeros(ds.len(), ds.arms());
            &zeros
        }
        Some(training) => {
            let cache = if training.weighting.depends_on_target() {
                local
            } else {
                shared
            };
            cache
                .entry(training.weighting.label())
                .or_insert_with(|| predict_rounds(ds, &training, &target.functional).map_err(|e| e.to_string()))
                .as_ref()
                .map_err(Clone::clone)?
        }
    };
    estimate_with(ds, &target.functional, ecfg, preds).map_err(|e| e.to_string())
}

fn aggregate(cfg: &ExperimentConfig, targets: &[PreparedTarget], cells: &[Vec<Cell>]) -> Vec<CoverageRow> {
    let dataset = cfg.dataset_id();
    let mut rows = Vec::with_capacity(targets.len() * cfg.estimators.len());
    for (ti, target) in targets.iter().enumerate() {
        for (ei, &kind) in cfg.estimators.iter().enumerate() {
            let idx = ti * cfg.estimators.len() + ei;
            let mut ok = Vec::new();
            let mut failures = 0;
            let mut seconds = 0.0;
            for rep in cells {
                let (outcome, s) = &rep[idx];
                seconds += s;
                match outcome {
                    Ok(o) => ok.push(o),
                    Err(_) => failures += 1,
                }
            }
            let n = ok.len() as f64;
            let mean = |f: &dyn Fn(&Outcome) -> f64| ok.iter().map(|o| f(o)).sum::<f64>() / n;
            let coverage = mean(&|o| f64::from(u8::from(o.covered)));
            rows.push(CoverageRow {
                dataset: dataset.clone(),
                target: target.id.clone(),
                estimator: kind,
                replications: ok.len(),
                coverage,
                coverage_se: (coverage * (1.0 - coverage) / n).sqrt(),
                mean_width: mean(&|o| o.width),
                bias: mean(&|o| o.psi_hat - target.truth),
                rmse: mean(&|o| (o.psi_hat - target.truth).powi(2)).sqrt(),
                floor_hits: mean(&|o| o.floor_hits as f64),
                failures,
                seconds,
            });
        }
    }
    rows
}

/// Writes result rows as CSV (with the documented header) or a JSON array.
pub fn write_results<W: Write>(rows: &[CoverageRow], format: OutputFormat, mut writer: W) -> Result<()> {
    if rows.is_empty() {
        return Err(OpeError::Empty("result rows"));
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, rows)?;
            writeln!(writer)?;
        }
    }
    Ok(())
}

pub fn emit_results(rows: &[CoverageRow], format: OutputFormat, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_results(rows, format, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_results_csv<R: std::io::Read>(reader: R) -> Result<Vec<CoverageRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(OpeError::from)).collect()
}
