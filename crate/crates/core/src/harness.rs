//! Experiment orchestration: named experiment presets over the two plants,
//! policy training and Monte-Carlo validation with schedule auditing,
//! decision-latency measurement, and artifact export (metrics, training
//! curves, Gantt charts).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{self, CampaignRecord, UncertaintyConfig};
use crate::instance::{InstanceError, ProblemInstance};
use crate::optimizer::{self, OptimizerError, SwarmConfig, SwarmState};
use crate::policy::{NetworkSpec, PolicyError, PolicyParams};
use crate::risk::{self, ObjectiveMode, ReturnSamples, RiskError, RiskSummary};
use crate::rollout::{self, EpisodeResult, RolloutError, RolloutOptions};
use crate::seeding;

const SCHEMA_VERSION: u32 = 1;

/// Errors from experiment orchestration. `Config` maps to CLI exit code 2,
/// everything else to 3.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Env(#[from] env::EnvError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One experimental condition: the three design factors, the objective, and
/// optional uncertainty misspecification applied at validation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub instance: String,
    pub processing_uncertainty: bool,
    pub due_uncertainty: bool,
    pub finite_release_times: bool,
    pub objective: ObjectiveMode,
    /// Extra processing-time half-width (periods) the real plant applies on
    /// top of the policy's assumed model.
    pub k_pt_periods: i64,
    /// Extra due-date rate shift (days) applied the same way.
    pub k_dd_days: f64,
    /// Episodes per objective evaluation during training.
    pub training_samples: usize,
    /// Episodes per validation run.
    pub validation_episodes: usize,
    /// Tail fraction for reported VaR/CVaR.
    pub beta: f64,
    /// Confidence parameter for the feasibility lower bound.
    pub upsilon: f64,
}

impl ExperimentConfig {
    /// Builds a named preset: E1-E8 (expectation objective over the full
    /// factorial of processing uncertainty, due uncertainty, release
    /// times), D3-D8 (same factors, CVaR objective), or M1-M8 (validating
    /// a pretrained policy under misspecified uncertainty).
    pub fn preset(id: &str, instance: &str) -> Result<Self, HarnessError> {
        let (family, number) = id
            .split_at_checked(1)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment id {id:?}")))?;
        let n: usize = number
            .parse()
            .map_err(|_| HarnessError::Config(format!("unknown experiment id {id:?}")))?;
        let mut config = Self {
            id: id.to_string(),
            instance: instance.to_string(),
            processing_uncertainty: false,
            due_uncertainty: false,
            finite_release_times: false,
            objective: ObjectiveMode::MeanPenalized,
            k_pt_periods: 0,
            k_dd_days: 0.0,
            training_samples: 1,
            validation_episodes: 500,
            beta: 0.2,
            upsilon: 0.05,
        };
        match family {
            "E" | "D" if (1..=8).contains(&n) => {
                let bits = n - 1;
                config.processing_uncertainty = bits & 4 != 0;
                config.due_uncertainty = bits & 2 != 0;
                config.finite_release_times = bits & 1 != 0;
                if family == "D" {
                    config.objective = ObjectiveMode::CVaRPenalized { beta: 0.2 };
                }
            }
            "M" if (1..=8).contains(&n) => {
                config.processing_uncertainty = true;
                config.due_uncertainty = true;
                config.finite_release_times = true;
                let (k_pt, k_dd) = [(0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]
                    [n - 1];
                config.k_pt_periods = k_pt;
                config.k_dd_days = k_dd as f64;
            }
            _ => return Err(HarnessError::Config(format!("unknown experiment id {id:?}"))),
        }
        if config.uncertain() {
            config.training_samples = 50;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if let ObjectiveMode::CVaRPenalized { beta } = self.objective {
            if !self.uncertain() {
                return Err(HarnessError::Config(
                    "a tail objective needs at least one uncertainty factor on".to_string(),
                ));
            }
            if !(0.0 < beta && beta <= 1.0) {
                return Err(HarnessError::Config("objective beta must be in (0, 1]".to_string()));
            }
        }
        if self.misspecified() && !(self.processing_uncertainty || self.due_uncertainty) {
            return Err(HarnessError::Config(
                "misspecification needs the corresponding uncertainty factors on".to_string(),
            ));
        }
        if self.training_samples == 0 || self.validation_episodes == 0 {
            return Err(HarnessError::Config("episode counts must be positive".to_string()));
        }
        if !(0.0 < self.beta && self.beta <= 1.0) || !(0.0 < self.upsilon && self.upsilon < 1.0) {
            return Err(HarnessError::Config("beta and upsilon out of range".to_string()));
        }
        if self.k_pt_periods < 0 || self.k_dd_days < 0.0 {
            return Err(HarnessError::Config("misspecification offsets must be >= 0".to_string()));
        }
        Ok(())
    }

    pub fn uncertain(&self) -> bool {
        self.processing_uncertainty || self.due_uncertainty
    }

    /// Whether this condition validates a pretrained policy on a plant
    /// whose uncertainty differs from the policy's training model.
    pub fn misspecified(&self) -> bool {
        self.k_pt_periods > 0 || self.k_dd_days > 0.0
    }

    pub fn uncertainty_config(&self) -> UncertaintyConfig {
        UncertaintyConfig {
            processing_uncertain: self.processing_uncertainty,
            due_uncertain: self.due_uncertainty,
            k_pt_periods: self.k_pt_periods,
            k_dd_days: self.k_dd_days,
            ..UncertaintyConfig::default()
        }
    }

    pub fn rollout_options(&self) -> RolloutOptions {
        RolloutOptions { misspecify_model: self.misspecified(), ..RolloutOptions::standard() }
    }

    /// Loads the instance with release times zeroed when that factor is
    /// off.
    pub fn load_instance(&self) -> Result<ProblemInstance, HarnessError> {
        let instance = ProblemInstance::load(&self.instance)?;
        Ok(if self.finite_release_times { instance } else { instance.without_releases() })
    }
}

/// One audited rule breach in an episode's schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleViolation {
    LaneOverlap { unit: usize, first_task: usize, second_task: usize, period: i64 },
    CleaningGap { unit: usize, prev_task: usize, task: usize, required: i64, actual: i64 },
    TaskReleaseTime { unit: usize, task: usize, release: i64, start: i64 },
    UnitReleaseTime { unit: usize, task: usize, release: i64, start: i64 },
    NotSuccessor { unit: usize, prev_task: usize, task: usize },
    NotEligible { unit: usize, task: usize },
    IncompleteCampaign { unit: usize, task: usize, batches_done: usize, required: i64 },
    MalformedCompletions { unit: usize, task: usize },
}

impl std::fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::LaneOverlap { unit, first_task, second_task, period } => write!(
                f,
                "unit {unit}: task {second_task} starts at period {period} while task {first_task} is still processing"
            ),
            Self::CleaningGap { unit, prev_task, task, required, actual } => write!(
                f,
                "unit {unit}: only {actual} periods between tasks {prev_task} and {task}, cleaning needs {required}"
            ),
            Self::TaskReleaseTime { unit, task, release, start } => write!(
                f,
                "unit {unit}: task {task} begins processing at period {start} before its release {release}"
            ),
            Self::UnitReleaseTime { unit, task, release, start } => write!(
                f,
                "unit {unit}: task {task} begins processing at period {start} before the unit's release {release}"
            ),
            Self::NotSuccessor { unit, prev_task, task } => {
                write!(f, "unit {unit}: task {task} may not follow task {prev_task}")
            }
            Self::NotEligible { unit, task } => {
                write!(f, "unit {unit}: task {task} is not eligible there")
            }
            Self::IncompleteCampaign { unit, task, batches_done, required } => write!(
                f,
                "unit {unit}: task {task} stopped after {batches_done} of {required} batches mid-lane"
            ),
            Self::MalformedCompletions { unit, task } => {
                write!(f, "unit {unit}: task {task} has non-increasing batch completions")
            }
        }
    }
}

/// Audits a finished episode's campaigns against the plant's operating
/// rules, re-reading only the recorded schedule. An incomplete campaign is
/// tolerated only as the last one of its lane (a horizon cut).
pub fn check_schedule(
    events: &[CampaignRecord],
    instance: &ProblemInstance,
) -> Vec<ScheduleViolation> {
    let mut violations = Vec::new();
    let mut lanes: Vec<Vec<&CampaignRecord>> = vec![Vec::new(); instance.n_units()];
    for event in events {
        if event.unit < lanes.len() {
            lanes[event.unit].push(event);
        } else {
            violations.push(ScheduleViolation::NotEligible { unit: event.unit, task: event.task });
        }
    }
    for (unit, lane) in lanes.iter_mut().enumerate() {
        lane.sort_by_key(|e| e.start_period);
        for (pos, event) in lane.iter().enumerate() {
            let task = event.task;
            let processing_start = event.start_period + event.setup_periods;
            if instance.eligibility(task, unit).is_none() {
                violations.push(ScheduleViolation::NotEligible { unit, task });
                continue;
            }
            if !event
                .batch_completion_periods
                .windows(2)
                .all(|w| w[0] < w[1])
                || event.batch_completion_periods.first().is_some_and(|&c| c <= processing_start)
                || event.batches_done != event.batch_completion_periods.len()
            {
                violations.push(ScheduleViolation::MalformedCompletions { unit, task });
            }
            if processing_start < instance.task_release(task) {
                violations.push(ScheduleViolation::TaskReleaseTime {
                    unit,
                    task,
                    release: instance.task_release(task),
                    start: processing_start,
                });
            }
            if processing_start < instance.unit_release(unit) {
                violations.push(ScheduleViolation::UnitReleaseTime {
                    unit,
                    task,
                    release: instance.unit_release(unit),
                    start: processing_start,
                });
            }
            if let Ok(required) = instance.batches_required(task, unit) {
                if (event.batches_done as i64) < required && pos + 1 != lane.len() {
                    violations.push(ScheduleViolation::IncompleteCampaign {
                        unit,
                        task,
                        batches_done: event.batches_done,
                        required,
                    });
                }
            }
            if pos > 0 {
                let prev = lane[pos - 1];
                let prev_end =
                    prev.batch_completion_periods.last().copied().unwrap_or(prev.start_period);
                if event.start_period < prev_end {
                    violations.push(ScheduleViolation::LaneOverlap {
                        unit,
                        first_task: prev.task,
                        second_task: task,
                        period: event.start_period,
                    });
                }
                if !instance.is_successor(prev.task, task) {
                    violations.push(ScheduleViolation::NotSuccessor {
                        unit,
                        prev_task: prev.task,
                        task,
                    });
                }
                let required = instance.cleaning_periods(prev.task, task, unit);
                let actual = processing_start - prev_end;
                if actual < required {
                    violations.push(ScheduleViolation::CleaningGap {
                        unit,
                        prev_task: prev.task,
                        task,
                        required,
                        actual,
                    });
                }
            }
        }
    }
    violations
}

/// Per-decision wall-time statistics over warm invocations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingStats {
    pub n_samples: usize,
    pub mean_seconds: f64,
    pub p95_seconds: f64,
    pub max_seconds: f64,
    pub variance_seconds2: f64,
}

/// Times the full decision path (feasible sets, feature normalization,
/// network forward, rounding) over `n_steps` warm steps of live episodes.
/// Environment stepping between decisions is excluded from the clock.
pub fn measure_decision_latency(
    params: &PolicyParams,
    instance: &ProblemInstance,
    uncertainty: &UncertaintyConfig,
    n_steps: usize,
    seed: u64,
) -> Result<TimingStats, HarnessError> {
    use crate::feasibility::{self, FeasibleSets};
    use crate::policy::{self, HiddenState, Scratch};
    if n_steps == 0 {
        return Err(HarnessError::Config("latency measurement needs n_steps >= 1".to_string()));
    }
    let spec = params.spec();
    if spec.input_dim != instance.state_dim() || spec.output_dim != instance.n_units() {
        return Err(HarnessError::Config(format!(
            "policy dimensions do not fit instance {}",
            instance.label()
        )));
    }
    let options = RolloutOptions::standard();
    let mut sets = FeasibleSets::with_units(instance.n_units());
    let mut features = Vec::with_capacity(instance.state_dim());
    let mut latent = Vec::with_capacity(instance.n_units());
    let mut control = Vec::with_capacity(instance.n_units());
    let mut scratch = Scratch::for_spec(spec);
    let mut hidden = HiddenState::zeros(spec);
    let mut samples = Vec::with_capacity(n_steps);
    let warmup = 64;
    let mut decisions_seen = 0usize;
    let mut scenario_idx = 0u64;
    'outer: loop {
        let episode_seed = seeding::mix(seed, &[seeding::PURPOSE_ROLLOUT, scenario_idx]);
        scenario_idx += 1;
        let mut rng = seeding::rng(episode_seed);
        let scenario = env::sample_scenario(instance, uncertainty, false, &mut rng);
        let mut state = env::initial_state(instance, &scenario);
        hidden.reset();
        loop {
            let t0 = Instant::now();
            feasibility::feasible_sets_into(&state, instance, &mut sets);
            policy::normalize_state_into(&state, instance, &mut features);
            policy::forward_into(params, &features, &mut hidden, &mut scratch, &mut latent)?;
            feasibility::round_to_control_into(&latent, &sets, &mut control);
            let elapsed = t0.elapsed().as_secs_f64();
            decisions_seen += 1;
            if decisions_seen > warmup {
                samples.push(elapsed);
                if samples.len() == n_steps {
                    break 'outer;
                }
            }
            let outcome = env::step(
                &mut state,
                &control,
                &scenario,
                instance,
                &options.env,
                &mut env::DiscardEvents,
            )?;
            if outcome.done {
                break;
            }
        }
    }
    samples.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let p95 = samples[((n as f64 * 0.95).ceil() as usize).clamp(1, n) - 1];
    Ok(TimingStats {
        n_samples: n,
        mean_seconds: mean,
        p95_seconds: p95,
        max_seconds: samples[n - 1],
        variance_seconds2: variance,
    })
}

/// One validation episode in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub raw_return: f64,
    pub penalized_return: f64,
    pub violated: bool,
    pub makespan: i64,
}

/// Deterministic validation results for one policy under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub experiment: ExperimentConfig,
    pub seed: u64,
    pub n_episodes: usize,
    /// Distribution summary of raw (non-penalized) returns.
    pub summary: RiskSummary,
    pub penalized_mean: f64,
    pub schedule_violations: Vec<String>,
    pub episodes: Vec<EpisodeSummary>,
    /// The first validation episode in full, for chart export.
    pub sample_episode: EpisodeResult,
}

/// Rolls the policy over `n_mc` fresh scenarios, summarizes the return
/// distribution, and audits every schedule. Pure given its arguments.
pub fn validate_policy(
    params: &PolicyParams,
    instance: &ProblemInstance,
    config: &ExperimentConfig,
    n_mc: usize,
    seed: u64,
) -> Result<ValidationReport, HarnessError> {
    if n_mc == 0 {
        return Err(HarnessError::Config("validation needs at least one episode".to_string()));
    }
    let uncertainty = config.uncertainty_config();
    let options = config.rollout_options();
    let base = seeding::mix(seed, &[seeding::PURPOSE_VALIDATE]);
    let results: Vec<(u64, EpisodeResult)> = (0..n_mc)
        .into_par_iter()
        .map(|idx| -> Result<(u64, EpisodeResult), HarnessError> {
            let episode_seed = seeding::mix(base, &[idx as u64]);
            let mut rng = seeding::rng(episode_seed);
            let scenario =
                env::sample_scenario(instance, &uncertainty, options.misspecify_model, &mut rng);
            let episode = rollout::run_episode(params, instance, &scenario, &options)?;
            Ok((episode_seed, episode))
        })
        .collect::<Result<_, _>>()?;
    let mut schedule_violations = Vec::new();
    for (idx, (_, episode)) in results.iter().enumerate() {
        for violation in check_schedule(&episode.schedule_events, instance) {
            schedule_violations.push(format!("episode {idx}: {violation}"));
        }
    }
    let samples = ReturnSamples::new(
        results.iter().map(|(_, e)| e.penalized_return).collect(),
        results.iter().map(|(_, e)| e.raw_return).collect(),
        results.iter().map(|(_, e)| e.violated).collect(),
        results.iter().map(|(s, _)| *s).collect(),
    )?;
    let summary = risk::summarize(&samples, config.beta, config.upsilon)?;
    let penalized_mean =
        samples.z_phi.iter().sum::<f64>() / samples.z_phi.len() as f64;
    let episodes: Vec<EpisodeSummary> = results
        .iter()
        .map(|(s, e)| EpisodeSummary {
            seed: *s,
            raw_return: e.raw_return,
            penalized_return: e.penalized_return,
            violated: e.violated,
            makespan: e.makespan,
        })
        .collect();
    debug_assert_eq!(episodes.len(), n_mc);
    Ok(ValidationReport {
        experiment: config.clone(),
        seed,
        n_episodes: n_mc,
        summary,
        penalized_mean,
        schedule_violations,
        episodes,
        sample_episode: results.into_iter().next().expect("n_mc >= 1").1,
    })
}

fn hsl_to_hex(h: f64, s: f64, l: f64) -> String {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to_byte = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", to_byte(r1), to_byte(g1), to_byte(b1))
}

/// Renders an episode's schedule as a standalone SVG document: one lane per
/// unit, campaign bars labeled T1..TN with hatched setup prefixes, and a
/// time axis in days.
pub fn export_gantt(episode: &EpisodeResult, instance: &ProblemInstance) -> String {
    let left = 70.0;
    let top = 34.0;
    let chart_w = 900.0;
    let lane_h = 44.0;
    let bar_h = 30.0;
    let n_units = instance.n_units();
    let height = top + lane_h * n_units as f64 + 16.0;
    let width = left + chart_w + 24.0;
    let dt = instance.dt_days();
    let end_period = episode
        .schedule_events
        .iter()
        .map(|e| e.batch_completion_periods.last().copied().unwrap_or(e.start_period + e.setup_periods))
        .max()
        .unwrap_or(0);
    let total_days = (end_period as f64 * dt).max(1.0);
    let x_of = |day: f64| left + day / total_days * chart_w;
    let mut svg = String::with_capacity(16 * 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(
        "<defs><pattern id=\"setup\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\">\
         <rect width=\"6\" height=\"6\" fill=\"#e8e8e8\"/>\
         <path d=\"M0,6 L6,0\" stroke=\"#9a9a9a\" stroke-width=\"1\"/></pattern></defs>\n",
    );
    let mut step = 1.0;
    for candidate in [1.0, 2.0, 5.0, 10.0, 20.0, 25.0, 50.0, 100.0] {
        if total_days / candidate <= 14.0 {
            step = candidate;
            break;
        }
    }
    let mut day = 0.0;
    while day <= total_days + 1e-9 {
        let x = x_of(day);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#cccccc\"/>\n",
            top - 4.0,
            top + lane_h * n_units as f64
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\" fill=\"#555555\">{day}</text>\n",
            top - 10.0
        ));
        day += step;
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" fill=\"#555555\">days</text>\n",
        width - 4.0,
        top - 10.0
    ));
    for unit in 0..n_units {
        let y = top + unit as f64 * lane_h;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#333333\">U{}</text>\n",
            left - 10.0,
            y + lane_h / 2.0 + 4.0,
            unit + 1
        ));
        svg.push_str(&format!(
            "<line x1=\"{left}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#eeeeee\"/>\n",
            y + lane_h,
            left + chart_w,
            y + lane_h
        ));
    }
    for event in &episode.schedule_events {
        let y = top + event.unit as f64 * lane_h + (lane_h - bar_h) / 2.0;
        let start_day = event.start_period as f64 * dt;
        let proc_day = (event.start_period + event.setup_periods) as f64 * dt;
        let end_day = event
            .batch_completion_periods
            .last()
            .map(|&p| p as f64 * dt)
            .unwrap_or(proc_day);
        let setup_w = x_of(proc_day) - x_of(start_day);
        if setup_w > 0.0 {
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{setup_w:.2}\" height=\"{bar_h}\" \
                 fill=\"url(#setup)\" stroke=\"#9a9a9a\"/>\n",
                x_of(start_day)
            ));
        }
        let proc_w = x_of(end_day) - x_of(proc_day);
        if proc_w > 0.0 {
            let hue = (event.task as f64 * 360.0 / instance.n_tasks() as f64 + 15.0) % 360.0;
            let fill = hsl_to_hex(hue, 0.62, 0.62);
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{proc_w:.2}\" height=\"{bar_h}\" \
                 fill=\"{fill}\" stroke=\"#444444\"/>\n",
                x_of(proc_day)
            ));
            svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#222222\">T{}</text>\n",
                x_of(proc_day) + proc_w / 2.0,
                y + bar_h / 2.0 + 4.0,
                event.task + 1
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Metadata wrapper written to metrics.json. Holds no wall-clock data, so
/// reruns with the same seed and worker count produce identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub schema_version: u32,
    pub seed: u64,
    pub best_j: Option<f64>,
    pub swarm: Option<SwarmConfig>,
    pub report: ValidationReport,
}

/// Everything a finished run leaves on disk, plus the in-memory results.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: ValidationReport,
    pub best_j: Option<f64>,
    pub policy: PolicyParams,
    pub swarm_state: Option<SwarmState>,
    pub metrics_path: PathBuf,
}

/// Creates the objective the optimizer maximizes for this condition:
/// sample `training_samples` episodes and score them under the configured
/// objective mode, attaching the summary for history logging.
pub fn training_objective<'a>(
    config: &'a ExperimentConfig,
    instance: &'a ProblemInstance,
    spec: &'a NetworkSpec,
) -> impl Fn(&[f64], u64) -> Result<optimizer::Evaluation, String> + Sync + 'a {
    let uncertainty = config.uncertainty_config();
    let options = RolloutOptions::standard();
    move |theta: &[f64], seed: u64| {
        let params =
            PolicyParams::new(spec.clone(), theta.to_vec()).map_err(|e| e.to_string())?;
        let samples = rollout::evaluate_policy(
            &params,
            instance,
            &uncertainty,
            config.training_samples,
            seed,
            &options,
        )
        .map_err(|e| e.to_string())?;
        let score = risk::objective(&samples, config.objective).map_err(|e| e.to_string())?;
        let summary =
            risk::summarize(&samples, config.beta, config.upsilon).map_err(|e| e.to_string())?;
        Ok(optimizer::Evaluation { score, summary: Some(summary) })
    }
}

/// Swarm configuration the named experiments run with: library defaults
/// plus component-wise velocity draws.
pub fn preset_swarm() -> SwarmConfig {
    SwarmConfig { per_dimension_r: true, ..SwarmConfig::default() }
}

/// Runs one experiment end to end and writes all artifacts into `out_dir`.
/// With `pretrained` the policy is taken as given and only validated;
/// otherwise one is searched from scratch. Misspecification conditions
/// never train, so they require `pretrained`. Returns the validation
/// outcome.
pub fn run_experiment(
    config: &ExperimentConfig,
    swarm: &SwarmConfig,
    seed: u64,
    pretrained: Option<PolicyParams>,
    out_dir: &Path,
) -> Result<RunOutcome, HarnessError> {
    config.validate()?;
    let instance = config.load_instance()?;
    std::fs::create_dir_all(out_dir)?;
    let (params, best_j, swarm_state) = match pretrained {
        Some(params) => (params, None, None),
        None if config.misspecified() => {
            return Err(HarnessError::Config(format!(
                "experiment {} validates a pretrained policy; none was given",
                config.id
            )));
        }
        None => {
            let spec = NetworkSpec::for_instance(&instance);
            let objective = training_objective(config, &instance, &spec);
            let state = optimizer::optimize(&objective, swarm, spec.param_count(), seed)?;
            let params = PolicyParams::new(spec, state.global_best.clone())?;
            let mut csv = Vec::new();
            optimizer::write_history_csv(&state.history, &mut csv)?;
            std::fs::write(out_dir.join("training.csv"), csv)?;
            std::fs::write(out_dir.join("swarm_state.json"), state.to_json_string())?;
            let best = state.global_best_score;
            (params, Some(best), Some(state))
        }
    };
    params.save(&out_dir.join("policy.json"))?;
    let report =
        validate_policy(&params, &instance, config, config.validation_episodes, seed)?;
    std::fs::write(out_dir.join("gantt.svg"), export_gantt(&report.sample_episode, &instance))?;
    let metrics = RunMetrics {
        schema_version: SCHEMA_VERSION,
        seed,
        best_j,
        swarm: swarm_state.is_some().then(|| swarm.clone()),
        report: report.clone(),
    };
    let metrics_path = out_dir.join("metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;
    let timing = measure_decision_latency(
        &params,
        &instance,
        &config.uncertainty_config(),
        1000,
        seed,
    )?;
    std::fs::write(
        out_dir.join("timing.json"),
        serde_json::to_string_pretty(&TimingReport {
            per_decision: timing,
            online_decision_normalized: 1.0,
        })?,
    )?;
    Ok(RunOutcome { report, best_j, policy: params, swarm_state, metrics_path })
}

/// Wall-clock data, kept out of metrics.json on purpose. The normalized
/// column uses the policy's own decision time as the unit, mirroring how
/// online-decision cost tables are usually presented.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingReport {
    pub per_decision: TimingStats,
    pub online_decision_normalized: f64,
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Io(e.into())
    }
}
