//! `ope`: simulate adaptively logged bandit data, estimate policy values and
//! run coverage experiments.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for data errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use ope_core::bandit::io::{load_dataset, read_target_weights_csv, save_dataset, CROSS_FILE, DATASET_FILE};
use ope_core::env::{
    simulate_bandit, simulate_with_policy, AgentConfig, ClassificationTable, EnumerableEnvironment, EpsilonSchedule,
    RewardEnvironment, SyntheticTableSpec,
};
use ope_core::experiment::{emit_results, run_experiment, write_results, ExperimentConfig, OutputFormat, TargetSpec};
use ope_core::models::{EngineChoice, TreeConfig};
use ope_core::{
    estimate, validate_dataset, Engine, EstimateReport, EstimatorConfig, EstimatorKind, OpeError, Schedule,
    TargetFunctional,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ope",
    version,
    about = "Off-policy evaluation for adaptively collected bandit data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log a bandit run with the ε-greedy agent and write dataset.csv and cross.csv.
    Simulate(SimulateArgs),
    /// Estimate a target's value from a logged dataset directory.
    Estimate(EstimateArgs),
    /// Run a coverage experiment from a JSON config.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Classification table CSV (`x1,...,xd,label`).
    #[arg(long, group = "source")]
    table: Option<PathBuf>,
    /// Enumerable environment JSON.
    #[arg(long, group = "source")]
    env: Option<PathBuf>,
    /// Synthetic Gaussian-cluster table as `rows,features,classes`.
    #[arg(long, group = "source")]
    synthetic: Option<String>,
    #[arg(long = "t")]
    rounds: usize,
    #[arg(long, default_value_t = 0.01)]
    eps_c: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    eps_exp: f64,
    #[arg(long, env = "OPE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "tree")]
    agent: Engine,
    #[arg(long, default_value_t = 1)]
    agent_refit_every: usize,
    /// Log with the uniform policy instead of the adaptive agent.
    #[arg(long)]
    uniform: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    /// Directory holding dataset.csv and cross.csv.
    #[arg(long)]
    dataset: PathBuf,
    /// `arm:k`, `uniform` or `contrast:k1,k2`.
    #[arg(long, conflicts_with = "target_weights")]
    target: Option<TargetSpec>,
    /// Non-contextual target as an `arm,weight` CSV.
    #[arg(long)]
    target_weights: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "cadr")]
    estimators: Vec<EstimatorKind>,
    #[arg(long, default_value = "linear")]
    outcome_model: Engine,
    #[arg(long)]
    max_depth: Option<usize>,
    /// `sequential`, `sequential:N` or `crosstime:F`.
    #[arg(long, default_value = "sequential")]
    training: Schedule,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Arm count when some arms never appear in the log.
    #[arg(long)]
    arms: Option<usize>,
    /// Build the full table of past scores for the variance estimates.
    #[arg(long)]
    materialize_dprime: bool,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Results file; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Record wall-clock seconds per row.
    #[arg(long)]
    timing: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => run_estimate(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_DATA })
        }
    }
}

fn load_env(a: &SimulateArgs) -> Result<Box<dyn RewardEnvironment>, OpeError> {
    if let Some(path) = &a.table {
        let f = std::fs::File::open(path).map_err(|e| OpeError::Data(format!("{}: {e}", path.display())))?;
        return Ok(Box::new(ClassificationTable::read_csv(std::io::BufReader::new(f))?));
    }
    if let Some(path) = &a.env {
        return Ok(Box::new(EnumerableEnvironment::from_json_file(path)?));
    }
    if let Some(spec) = &a.synthetic {
        let parts: Vec<usize> = spec
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| OpeError::Config(format!("--synthetic expects rows,features,classes, got `{spec}`")))?;
        let [rows, features, classes] = parts[..] else {
            return Err(OpeError::Config(format!(
                "--synthetic expects rows,features,classes, got `{spec}`"
            )));
        };
        return Ok(Box::new(ClassificationTable::synthetic(&SyntheticTableSpec {
            rows,
            features,
            classes,
            separation: 1.0,
            seed: a.seed,
        })?));
    }
    Err(OpeError::Config(
        "one of --table, --env or --synthetic is required".into(),
    ))
}

fn simulate(a: SimulateArgs) -> Result<(), OpeError> {
    let env = load_env(&a)?;
    let ds = if a.uniform {
        let k = env.arms();
        let policy = Arc::new(ope_core::bandit::UniformPolicy { arms: k });
        simulate_with_policy(env.as_ref(), a.rounds, policy, 1.0 / k as f64, a.seed)?
    } else {
        let sched = EpsilonSchedule {
            c: a.eps_c,
            exponent: a.eps_exp,
        };
        let agent = AgentConfig {
            engine: a.agent.into(),
            refit_every: a.agent_refit_every,
        };
        simulate_bandit(env.as_ref(), a.rounds, &sched, &agent, a.seed)?
    };
    save_dataset(&ds, &a.out)?;
    log::info!("wrote {} rounds to {}", ds.len(), a.out.display());
    Ok(())
}

fn resolve_target(a: &EstimateArgs, arms: usize) -> Result<TargetFunctional, OpeError> {
    if let Some(path) = &a.target_weights {
        let f = std::fs::File::open(path).map_err(|e| OpeError::Data(format!("{}: {e}", path.display())))?;
        return read_target_weights_csv(std::io::BufReader::new(f), arms);
    }
    match a.target.unwrap_or(TargetSpec::Arm(1)) {
        TargetSpec::Arm(k) => TargetFunctional::arm(k, arms).map_err(|e| OpeError::Config(e.to_string())),
        TargetSpec::Uniform => Ok(TargetFunctional::Uniform { arms }),
        TargetSpec::Contrast(p, m) => {
            TargetFunctional::contrast(p, m, arms).map_err(|e| OpeError::Config(e.to_string()))
        }
        TargetSpec::Learned(_) => Err(OpeError::Config(
            "learned targets need an environment; use `ope bench`".into(),
        )),
    }
}

fn run_estimate(a: EstimateArgs) -> Result<(), OpeError> {
    let dir: &Path = &a.dataset;
    let ds = load_dataset(&dir.join(DATASET_FILE), &dir.join(CROSS_FILE), a.arms)?;
    let violations = validate_dataset(&ds);
    if let Some(v) = violations.first() {
        return Err(OpeError::Data(format!("{} invalid: {v}", dir.display())));
    }
    let gstar = resolve_target(&a, ds.arms())?;
    let engine = EngineChoice {
        engine: a.outcome_model,
        tree: TreeConfig {
            max_depth: a.max_depth,
            ..TreeConfig::default()
        },
    };
    let reports = a
        .estimators
        .iter()
        .map(|&kind| {
            let mut cfg = EstimatorConfig::new(kind).with_alpha(a.alpha);
            cfg.training.schedule = a.training;
            cfg.training.engine = engine;
            cfg.burn_in = a.burn_in;
            cfg.materialize_dprime = a.materialize_dprime;
            estimate(&ds, &gstar, &cfg)
        })
        .collect::<Result<Vec<EstimateReport>, _>>()?;
    let json = serde_json::to_string_pretty(&reports)?;
    match &a.out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), OpeError> {
    let mut cfg = ExperimentConfig::from_json_file(&a.config)?;
    if let Ok(seed) = std::env::var("OPE_SEED") {
        cfg.seed = seed
            .trim()
            .parse()
            .map_err(|_| OpeError::Config(format!("OPE_SEED must be an unsigned integer, got `{seed}`")))?;
    }
    if let Some(p) = a.parallel {
        cfg.parallelism = p;
    }
    if let Some(f) = a.format {
        cfg.format = f;
    }
    if let Some(out) = a.out {
        cfg.output = Some(out);
    }
    cfg.timing |= a.timing;
    let rows = run_experiment(&cfg)?;
    match &cfg.output {
        Some(path) => emit_results(&rows, cfg.format, path),
        None => write_results(&rows, cfg.format, std::io::stdout().lock()),
    }
}
