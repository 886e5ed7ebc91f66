//! Episode execution: masked policy rollouts over one scenario, optional
//! step-by-step trajectory dumps, and parallel Monte-Carlo evaluation of a
//! policy over independently sampled scenarios.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    self, CampaignRecord, DiscardEvents, EnvError, EnvOptions, EventSink, Scenario,
    UncertaintyConfig,
};
use crate::feasibility::{self, FeasibleSets, PenaltyConfig};
use crate::instance::ProblemInstance;
use crate::policy::{self, HiddenState, PolicyError, PolicyParams, Scratch};
use crate::risk::{ReturnSamples, RiskError};
use crate::seeding;

/// Errors from episode execution.
#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("policy dimensions (in {policy_in}, out {policy_out}) do not fit the instance (state {state_dim}, units {n_units})")]
    SpecMismatch { policy_in: usize, policy_out: usize, state_dim: usize, n_units: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Samples(#[from] RiskError),
    #[error("cannot write trajectory: {0}")]
    Trace(#[from] std::io::Error),
}

/// Execution switches shared by single episodes and batched evaluation.
#[derive(Debug, Clone, Default)]
pub struct RolloutOptions {
    pub penalty: PenaltyConfig,
    pub env: EnvOptions,
    /// Feed the policy min-max normalized features (default) or the raw
    /// observable vector.
    pub normalize_features: bool,
    /// Sample scenarios with misspecified uncertainty parameters
    /// (plant-model mismatch studies).
    pub misspecify_model: bool,
}

impl RolloutOptions {
    pub fn standard() -> Self {
        Self {
            penalty: PenaltyConfig::default(),
            env: EnvOptions::default(),
            normalize_features: true,
            misspecify_model: false,
        }
    }
}

/// Outcome of one full episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Sum of environment rewards.
    pub raw_return: f64,
    /// Raw return minus the accumulated allocation penalties.
    pub penalized_return: f64,
    pub total_penalty: f64,
    /// Whether any step carried a positive allocation penalty.
    pub violated: bool,
    pub makespan: i64,
    pub tardiness: Vec<i64>,
    /// Every campaign of the episode (completed ones first, then any still
    /// running at the horizon), for rendering and schedule checking.
    pub schedule_events: Vec<CampaignRecord>,
}

/// One step of a trajectory dump.
#[derive(Debug, Clone, Serialize)]
struct TraceStep<'a> {
    t: i64,
    state: &'a [f64],
    control: &'a [usize],
    reward: f64,
    events: &'a [TraceEvent],
}

/// Within-step event in a trajectory dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEvent {
    CampaignStarted { unit: usize, task: usize, t: i64, setup_periods: i64 },
    BatchCompleted { unit: usize, task: usize, batch: usize, t: i64, kg: f64 },
    TaskFinished { task: usize, t: i64 },
    DueConfirmed { task: usize, t: i64, due_period: i64 },
}

#[derive(Default)]
struct RecordingSink {
    events: Vec<TraceEvent>,
}

impl EventSink for RecordingSink {
    fn campaign_started(&mut self, unit: usize, task: usize, t: i64, setup_periods: i64) {
        self.events.push(TraceEvent::CampaignStarted { unit, task, t, setup_periods });
    }
    fn batch_completed(&mut self, unit: usize, task: usize, batch: usize, t: i64, kg: f64) {
        self.events.push(TraceEvent::BatchCompleted { unit, task, batch, t, kg });
    }
    fn task_finished(&mut self, task: usize, t: i64) {
        self.events.push(TraceEvent::TaskFinished { task, t });
    }
    fn due_confirmed(&mut self, task: usize, t: i64, due_period: i64) {
        self.events.push(TraceEvent::DueConfirmed { task, t, due_period });
    }
}

fn check_dims(params: &PolicyParams, instance: &ProblemInstance) -> Result<(), RolloutError> {
    let spec = params.spec();
    if spec.input_dim != instance.state_dim() || spec.output_dim != instance.n_units() {
        return Err(RolloutError::SpecMismatch {
            policy_in: spec.input_dim,
            policy_out: spec.output_dim,
            state_dim: instance.state_dim(),
            n_units: instance.n_units(),
        });
    }
    Ok(())
}

fn run_episode_inner(
    params: &PolicyParams,
    instance: &ProblemInstance,
    scenario: &Scenario,
    options: &RolloutOptions,
    mut on_step: impl FnMut(i64, &[f64], &[usize], f64, &[TraceEvent]) -> Result<(), RolloutError>,
    trace: bool,
) -> Result<EpisodeResult, RolloutError> {
    check_dims(params, instance)?;
    let spec = params.spec();
    let mut state = env::initial_state(instance, scenario);
    let mut hidden = HiddenState::zeros(spec);
    let mut scratch = Scratch::for_spec(spec);
    let mut sets = FeasibleSets::with_units(instance.n_units());
    let mut features = Vec::with_capacity(instance.state_dim());
    let mut latent = Vec::with_capacity(instance.n_units());
    let mut control = Vec::with_capacity(instance.n_units());
    let mut sink = RecordingSink::default();
    let mut raw_return = 0.0;
    let mut total_penalty = 0.0;
    loop {
        feasibility::feasible_sets_into(&state, instance, &mut sets);
        if options.normalize_features {
            policy::normalize_state_into(&state, instance, &mut features);
        } else {
            features.clear();
            state.write_observable(&mut features);
        }
        policy::forward_into(params, &features, &mut hidden, &mut scratch, &mut latent)?;
        feasibility::round_to_control_into(&latent, &sets, &mut control);
        total_penalty +=
            feasibility::double_allocation_penalty(&control, &options.penalty, instance.n_tasks());
        let t = state.t;
        let outcome = if trace {
            sink.events.clear();
            features.clear();
            state.write_observable(&mut features);
            let outcome = env::step(&mut state, &control, scenario, instance, &options.env, &mut sink)?;
            on_step(t, &features, &control, outcome.reward, &sink.events)?;
            outcome
        } else {
            env::step(&mut state, &control, scenario, instance, &options.env, &mut DiscardEvents)?
        };
        raw_return += outcome.reward;
        if outcome.done {
            break;
        }
    }
    let (makespan, tardiness) = env::makespan_and_tardiness(&state)?;
    let mut schedule_events = std::mem::take(&mut state.history);
    for unit in 0..instance.n_units() {
        if let Some(active) = state.active[unit].take() {
            schedule_events.push(active);
        }
    }
    Ok(EpisodeResult {
        raw_return,
        penalized_return: raw_return - total_penalty,
        total_penalty,
        violated: total_penalty > 0.0,
        makespan,
        tardiness,
        schedule_events,
    })
}

/// Runs one masked episode of the policy over a fixed scenario.
pub fn run_episode(
    params: &PolicyParams,
    instance: &ProblemInstance,
    scenario: &Scenario,
    options: &RolloutOptions,
) -> Result<EpisodeResult, RolloutError> {
    run_episode_inner(params, instance, scenario, options, |_, _, _, _, _| Ok(()), false)
}

/// Like [`run_episode`], additionally writing one JSON line per step:
/// `{"t", "state", "control", "reward", "events"}` with the raw observable
/// state at decision time.
pub fn run_episode_traced(
    params: &PolicyParams,
    instance: &ProblemInstance,
    scenario: &Scenario,
    options: &RolloutOptions,
    writer: &mut dyn std::io::Write,
) -> Result<EpisodeResult, RolloutError> {
    let result = run_episode_inner(
        params,
        instance,
        scenario,
        options,
        |t, state, control, reward, events| {
            let line = TraceStep { t, state, control, reward, events };
            serde_json::to_writer(&mut *writer, &line)
                .map_err(|e| RolloutError::Trace(e.into()))?;
            writer.write_all(b"\n")?;
            Ok(())
        },
        true,
    )?;
    writer.flush()?;
    Ok(result)
}

/// Evaluates a policy over `n_episodes` independently sampled scenarios.
///
/// Episode `i` draws its scenario from a stream seeded by
/// `mix(base_seed, i)`, so the result is a pure function of the arguments
/// and identical for any worker count; episodes run in parallel on the
/// global thread pool and outputs stay ordered by episode index.
pub fn evaluate_policy(
    params: &PolicyParams,
    instance: &ProblemInstance,
    config: &UncertaintyConfig,
    n_episodes: usize,
    base_seed: u64,
    options: &RolloutOptions,
) -> Result<ReturnSamples, RolloutError> {
    check_dims(params, instance)?;
    let rows: Vec<(f64, f64, bool, u64)> = (0..n_episodes)
        .into_par_iter()
        .map(|idx| -> Result<(f64, f64, bool, u64), RolloutError> {
            let seed = seeding::mix(base_seed, &[idx as u64]);
            let mut rng = seeding::rng(seed);
            let scenario =
                env::sample_scenario(instance, config, options.misspecify_model, &mut rng);
            let episode = run_episode(params, instance, &scenario, options)?;
            Ok((episode.penalized_return, episode.raw_return, episode.violated, seed))
        })
        .collect::<Result<_, _>>()?;
    let mut z_phi = Vec::with_capacity(rows.len());
    let mut z = Vec::with_capacity(rows.len());
    let mut violated = Vec::with_capacity(rows.len());
    let mut seeds = Vec::with_capacity(rows.len());
    for (phi, raw, v, s) in rows {
        z_phi.push(phi);
        z.push(raw);
        violated.push(v);
        seeds.push(s);
    }
    Ok(ReturnSamples::new(z_phi, z, violated, seeds)?)
}
