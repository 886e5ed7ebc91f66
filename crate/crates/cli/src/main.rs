//! Command-line frontend: experiment training and validation, single-episode
//! rollouts with chart and trace export, decision-latency measurement, and
//! instance file checks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use batchplant::env::{self, UncertaintyConfig};
use batchplant::harness::{self, ExperimentConfig, HarnessError, ValidationReport};
use batchplant::instance::ProblemInstance;
use batchplant::optimizer::{OptimizerError, SwarmConfig};
use batchplant::policy::PolicyParams;
use batchplant::risk::ObjectiveMode;
use batchplant::rollout::{self, RolloutOptions};
use batchplant::seeding;

#[derive(Parser)]
#[command(
    name = "batchplant",
    version,
    about = "Train, validate, and inspect batch plant scheduling policies"
)]
struct Cli {
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy for a named experiment and write all artifacts.
    Train {
        /// Experiment id (E1-E8 or D3-D8).
        #[arg(long)]
        experiment: String,
        /// Instance name or path to an instance JSON file.
        #[arg(long, default_value = "instance1")]
        instance: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for policy.json, training.csv, metrics.json,
        /// timing.json, swarm_state.json and gantt.svg.
        #[arg(long)]
        out: PathBuf,
        /// Swarm size.
        #[arg(long)]
        pop: Option<usize>,
        /// Search iterations.
        #[arg(long)]
        iters: Option<usize>,
        /// Episodes per objective evaluation.
        #[arg(long)]
        samples: Option<usize>,
        /// Validation episodes after training.
        #[arg(long)]
        mc: Option<usize>,
        /// Tail fraction for VaR/CVaR reporting (and the tail objective,
        /// for D experiments).
        #[arg(long)]
        beta: Option<f64>,
        /// Set any swarm field, e.g. --override sa_every=5. Values are
        /// JSON. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Validate a trained policy under a named experiment condition.
    Validate {
        #[arg(long)]
        policy: PathBuf,
        /// Experiment id (E1-E8, D3-D8, or M1-M8).
        #[arg(long)]
        experiment: String,
        #[arg(long, default_value = "instance1")]
        instance: String,
        /// Monte-Carlo episodes.
        #[arg(long, default_value_t = 500)]
        mc: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll one episode on the deterministic plant and print the result.
    Rollout {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value = "instance1")]
        instance: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the schedule as an SVG Gantt chart.
        #[arg(long)]
        gantt: Option<PathBuf>,
        /// Write a JSON-lines trajectory, one line per period.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Measure warm per-decision latency of a policy.
    Latency {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value = "instance1")]
        instance: String,
        #[arg(long, default_value_t = 10000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Instance file utilities.
    Instance {
        #[command(subcommand)]
        action: InstanceAction,
    },
}

#[derive(Subcommand)]
enum InstanceAction {
    /// Parse and check an instance file, printing a short summary.
    Validate { file: String },
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_)
            | HarnessError::Instance(_)
            | HarnessError::Policy(_)
            | HarnessError::Optimizer(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<batchplant::instance::InstanceError> for CliError {
    fn from(e: batchplant::instance::InstanceError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<batchplant::policy::PolicyError> for CliError {
    fn from(e: batchplant::policy::PolicyError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<batchplant::rollout::RolloutError> for CliError {
    fn from(e: batchplant::rollout::RolloutError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(format!("serialization: {e}"))
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}

/// Prints a line, treating a closed stdout (e.g. piping into `head`) as a
/// clean exit instead of a panic.
fn emit(line: std::fmt::Arguments<'_>) {
    use std::io::ErrorKind;
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_fmt(format_args!("{line}\n")) {
        if e.kind() == ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: io: {e}");
        std::process::exit(3);
    }
}

macro_rules! emit {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(CliError::Config("workers must be at least 1".to_string()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Train {
            experiment,
            instance,
            seed,
            out,
            pop,
            iters,
            samples,
            mc,
            beta,
            overrides,
        } => {
            let mut config = ExperimentConfig::preset(&experiment, &instance)?;
            if config.misspecified() {
                return Err(CliError::Config(format!(
                    "experiment {experiment} only validates a pretrained policy; use validate"
                )));
            }
            if let Some(n) = samples {
                config.training_samples = n;
            }
            if let Some(n) = mc {
                config.validation_episodes = n;
            }
            if let Some(b) = beta {
                config.beta = b;
                if matches!(config.objective, ObjectiveMode::CVaRPenalized { .. }) {
                    config.objective = ObjectiveMode::CVaRPenalized { beta: b };
                }
            }
            config.validate()?;
            let mut swarm = harness::preset_swarm();
            if let Some(p) = pop {
                swarm.population = p;
            }
            if let Some(k) = iters {
                swarm.iterations = k;
            }
            let swarm = apply_overrides(&swarm, &overrides)?;
            let outcome = harness::run_experiment(&config, &swarm, seed, None, &out)?;
            emit!(
                "experiment {} on {}: best J {:.4}",
                config.id,
                config.instance,
                outcome.best_j.unwrap_or(f64::NEG_INFINITY)
            );
            print_report(&outcome.report);
            emit!("artifacts in {}", out.display());
            Ok(())
        }
        Command::Validate { policy, experiment, instance, mc, seed, out } => {
            let mut config = ExperimentConfig::preset(&experiment, &instance)?;
            config.validation_episodes = mc;
            let params = PolicyParams::load(&policy)?;
            let outcome =
                harness::run_experiment(&config, &harness::preset_swarm(), seed, Some(params), &out)?;
            print_report(&outcome.report);
            emit!("artifacts in {}", out.display());
            Ok(())
        }
        Command::Rollout { policy, instance, seed, gantt, trace } => {
            let params = PolicyParams::load(&policy)?;
            let inst = ProblemInstance::load(&instance)?;
            let options = RolloutOptions::standard();
            let mut rng = seeding::rng(seeding::mix(seed, &[seeding::PURPOSE_ROLLOUT]));
            let scenario =
                env::sample_scenario(&inst, &UncertaintyConfig::default(), false, &mut rng);
            let episode = match &trace {
                Some(path) => {
                    let mut writer = BufWriter::new(File::create(path)?);
                    let episode =
                        rollout::run_episode_traced(&params, &inst, &scenario, &options, &mut writer)?;
                    writer.flush()?;
                    episode
                }
                None => rollout::run_episode(&params, &inst, &scenario, &options)?,
            };
            if let Some(path) = &gantt {
                std::fs::write(path, harness::export_gantt(&episode, &inst))?;
            }
            emit!("{}", serde_json::to_string_pretty(&episode)?);
            Ok(())
        }
        Command::Latency { policy, instance, steps, seed } => {
            let params = PolicyParams::load(&policy)?;
            let inst = ProblemInstance::load(&instance)?;
            let stats = harness::measure_decision_latency(
                &params,
                &inst,
                &UncertaintyConfig::default(),
                steps,
                seed,
            )?;
            emit!("{}", serde_json::to_string_pretty(&stats)?);
            Ok(())
        }
        Command::Instance { action: InstanceAction::Validate { file } } => {
            let inst = ProblemInstance::load(&file)?;
            emit!(
                "{}: {} tasks, {} units, horizon {} periods of {} days",
                inst.label(),
                inst.n_tasks(),
                inst.n_units(),
                inst.horizon(),
                inst.dt_days()
            );
            emit!("ok");
            Ok(())
        }
    }
}

/// Applies repeated `KEY=VALUE` settings to a swarm configuration. Values
/// are parsed as JSON; unknown keys and invalid shapes are config errors.
fn apply_overrides(swarm: &SwarmConfig, overrides: &[String]) -> Result<SwarmConfig, CliError> {
    if overrides.is_empty() {
        return Ok(swarm.clone());
    }
    let mut value = serde_json::to_value(swarm)?;
    let map = value.as_object_mut().expect("swarm config serializes to an object");
    for entry in overrides {
        let (key, raw) = entry.split_once('=').ok_or_else(|| {
            CliError::Config(format!("override {entry:?} must look like KEY=VALUE"))
        })?;
        if !map.contains_key(key) {
            return Err(CliError::Config(format!("unknown swarm field {key:?}")));
        }
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .map_err(|_| CliError::Config(format!("override value {raw:?} is not valid JSON")))?;
        map.insert(key.to_string(), parsed);
    }
    let swarm: SwarmConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Config(format!("override rejected: {e}")))?;
    swarm.validate()?;
    Ok(swarm)
}

fn print_report(report: &ValidationReport) {
    let s = &report.summary;
    emit!(
        "validation over {} episodes: mean {:.4}, std {:.4}, VaR {:.4}, CVaR {:.4} (beta {}), feasible {:.3} (lower bound {:.3})",
        report.n_episodes, s.mean, s.std, s.var_beta, s.cvar_beta, s.beta, s.f_sa, s.f_lb
    );
    if !report.schedule_violations.is_empty() {
        emit!("schedule audit: {} violations", report.schedule_violations.len());
    }
}
