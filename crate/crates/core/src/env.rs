//! Plant dynamics: scenario sampling, state initialization, the one-period
//! transition function, sparse terminal reward, and terminal schedule
//! statistics.
//!
//! Time advances in integer periods. Each period every unit receives one
//! control: a task id `1..=N` to start (or continue) or the idle code `N+1`.
//! Campaigns run whole orders as back-to-back batches after a
//! sequence-dependent setup; true batch durations live in a hidden
//! [`Scenario`] while the observable state carries an expectation-based
//! countdown that is corrected whenever a batch actually completes.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::ProblemInstance;

/// Errors from the transition function and terminal queries.
#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("control vector has length {got}, expected one entry per unit ({expected})")]
    ControlLength { got: usize, expected: usize },
    #[error("control code {code} for unit index {unit} is outside 1..={max}")]
    ControlOutOfRange { unit: usize, code: usize, max: usize },
    #[error("task index {task} is not eligible on unit index {unit}")]
    NotEligible { task: usize, unit: usize },
    #[error("unit index {unit} is busy with task index {active}; control {requested} would interrupt the campaign")]
    Preemption { unit: usize, active: usize, requested: usize },
    #[error("task index {task} is already finished")]
    TaskFinished { task: usize },
    #[error("task index {task} may not directly follow task index {prev} on unit index {unit}")]
    NotSuccessor { prev: usize, task: usize, unit: usize },
    #[error("unit index {unit} is busy; setup time is defined for idle units only")]
    UnitBusy { unit: usize },
    #[error("episode is over at t = {t}")]
    EpisodeOver { t: i64 },
    #[error("episode has not terminated; terminal statistics are undefined")]
    NotFinished,
}

/// Realized uncertainty of one episode, hidden from the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// `batch_periods[task][unit]` holds the true duration in periods of each
    /// batch of that campaign; empty where the task is not eligible.
    pub batch_periods: Vec<Vec<Vec<i64>>>,
    /// True due date of each task in periods.
    pub confirmed_due_periods: Vec<i64>,
    /// Period at which the true due date becomes visible to the state.
    pub confirm_at_period: Vec<i64>,
    pub processing_uncertain: bool,
    pub due_uncertain: bool,
}

/// Uncertainty model parameters.
///
/// The two `*_uncertain` flags select which factors are active; the
/// misspecification constants only apply when sampling is asked to
/// misspecify (plant-model mismatch studies).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    pub processing_uncertain: bool,
    pub due_uncertain: bool,
    /// Half-width of the batch-duration uniform, in periods.
    pub c_periods: i64,
    /// Extra half-width under misspecification, in periods.
    pub k_pt_periods: i64,
    /// Scale of the due-date rate shift under misspecification, in days.
    pub k_dd_days: f64,
    /// How many periods before the expected due date the true date is
    /// revealed.
    pub due_confirm_lead_periods: i64,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            processing_uncertain: false,
            due_uncertain: false,
            c_periods: 1,
            k_pt_periods: 0,
            k_dd_days: 0.0,
            due_confirm_lead_periods: 6,
        }
    }
}

/// One campaign of a unit: start bookkeeping, true completion calendar,
/// progress, and the expectation-based remaining-time estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub task: usize,
    pub unit: usize,
    pub start_period: i64,
    pub setup_periods: i64,
    /// Absolute period at which each batch truly completes, strictly
    /// increasing.
    pub batch_completion_periods: Vec<i64>,
    pub batches_done: usize,
    /// Estimated periods until the campaign ends, as shown to the policy.
    pub estimated_remaining: i64,
}

/// Full plant state: the observable vector plus hidden bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Produced inventory per task in kilograms.
    pub inventory_kg: Vec<f64>,
    /// Control code applied to each unit in the previous period.
    pub last_control: Vec<usize>,
    /// Estimated periods until each unit is free (release countdown while
    /// idle).
    pub remaining_periods: Vec<i64>,
    /// Periods until each task's due date; negative once overdue, frozen at
    /// completion.
    pub slack_periods: Vec<i64>,
    pub t: i64,
    pub finished: Vec<bool>,
    finished_count: usize,
    /// Last task completed on each unit with its completion period.
    pub last_task: Vec<Option<(usize, i64)>>,
    /// Running campaign per unit.
    pub active: Vec<Option<CampaignRecord>>,
    /// Completed (or aborted) campaigns in completion order.
    pub history: Vec<CampaignRecord>,
    pub done: bool,
}

impl PlantState {
    /// Whether a unit currently runs a campaign.
    #[inline]
    pub fn is_busy(&self, unit: usize) -> bool {
        self.active[unit].is_some()
    }

    /// Task index the unit is running, if any.
    #[inline]
    pub fn active_task(&self, unit: usize) -> Option<usize> {
        self.active[unit].as_ref().map(|r| r.task)
    }

    /// Number of finished tasks.
    #[inline]
    pub fn n_finished(&self) -> usize {
        self.finished_count
    }

    /// Appends the observable vector [inventory, last controls, unit
    /// countdowns, due countdowns, t] to `out`.
    pub fn write_observable(&self, out: &mut Vec<f64>) {
        out.extend(self.inventory_kg.iter().copied());
        out.extend(self.last_control.iter().map(|&w| w as f64));
        out.extend(self.remaining_periods.iter().map(|&d| d as f64));
        out.extend(self.slack_periods.iter().map(|&r| r as f64));
        out.push(self.t as f64);
    }
}

/// Reward weights over the observable state blocks. The default scores
/// terminal states by the sum of due countdowns minus the elapsed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub inventory: f64,
    pub last_control: f64,
    pub remaining: f64,
    pub slack: f64,
    pub time: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { inventory: 0.0, last_control: 0.0, remaining: 0.0, slack: 1.0, time: -1.0 }
    }
}

/// Transition-function switches.
#[derive(Debug, Clone, Default)]
pub struct EnvOptions {
    /// Debug switch: let a control interrupt a running campaign instead of
    /// failing. Masked policies can never reach this branch.
    pub allow_preemption: bool,
    pub reward_weights: RewardWeights,
}

/// Outcome of one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

/// Receiver for within-episode events; all hooks default to no-ops.
pub trait EventSink {
    fn campaign_started(&mut self, _unit: usize, _task: usize, _t: i64, _setup_periods: i64) {}
    fn batch_completed(&mut self, _unit: usize, _task: usize, _batch: usize, _t: i64, _kg: f64) {}
    fn task_finished(&mut self, _task: usize, _t: i64) {}
    fn due_confirmed(&mut self, _task: usize, _t: i64, _due_period: i64) {}
}

/// Sink that drops every event.
pub struct DiscardEvents;

impl EventSink for DiscardEvents {}

/// Draws one episode's realized uncertainty.
///
/// Draw order is fixed (tasks ascending; per task, units ascending, batches
/// in sequence; then due dates ascending) so a seed fully determines the
/// scenario. Batch durations are uniform on {max(1, mean-c), ..., mean+c}
/// periods; due dates are Poisson in days at the published daily rates, then
/// converted to periods. Misspecification widens the uniform by `k_pt` and
/// shifts the Poisson rate by `k_dd * z`, `z ~ U(-1, 1)` days.
pub fn sample_scenario(
    instance: &ProblemInstance,
    config: &UncertaintyConfig,
    misspecify: bool,
    rng: &mut impl Rng,
) -> Scenario {
    let n = instance.n_tasks();
    let n_units = instance.n_units();
    let mut batch_periods = vec![vec![Vec::new(); n_units]; n];
    for task in 0..n {
        for unit in 0..n_units {
            let Some(e) = instance.eligibility(task, unit) else { continue };
            let durations = &mut batch_periods[task][unit];
            durations.reserve(e.batches as usize);
            if config.processing_uncertain {
                let half = config.c_periods + if misspecify { config.k_pt_periods } else { 0 };
                let lo = (e.proc_periods - half).max(1);
                let hi = e.proc_periods + half;
                for _ in 0..e.batches {
                    durations.push(rng.random_range(lo..=hi));
                }
            } else {
                durations.extend(std::iter::repeat(e.proc_periods).take(e.batches as usize));
            }
        }
    }
    let mut confirmed_due_periods = Vec::with_capacity(n);
    let mut confirm_at_period = Vec::with_capacity(n);
    for task in 0..n {
        if config.due_uncertain {
            let mut rate_days = instance.due_days(task);
            if misspecify {
                let z: f64 = rng.random_range(-1.0..1.0);
                rate_days += config.k_dd_days * z;
            }
            if rate_days <= 0.0 {
                log::warn!(
                    "task {}: misspecified due-date rate {rate_days} days clamped to 1",
                    task + 1
                );
                rate_days = 1.0;
            }
            let days = Poisson::new(rate_days).expect("positive rate").sample(rng);
            confirmed_due_periods.push((days / instance.dt_days()).round() as i64);
            confirm_at_period
                .push((instance.due_periods(task) - config.due_confirm_lead_periods).max(0));
        } else {
            confirmed_due_periods.push(instance.due_periods(task));
            confirm_at_period.push(0);
        }
    }
    Scenario {
        batch_periods,
        confirmed_due_periods,
        confirm_at_period,
        processing_uncertain: config.processing_uncertain,
        due_uncertain: config.due_uncertain,
    }
}

/// Empty plant at t = 0: no inventory, all units idle with their release
/// countdowns, every due countdown at its expected value.
pub fn initial_state(instance: &ProblemInstance, _scenario: &Scenario) -> PlantState {
    let n = instance.n_tasks();
    let n_units = instance.n_units();
    PlantState {
        inventory_kg: vec![0.0; n],
        last_control: vec![instance.idle_code(); n_units],
        remaining_periods: (0..n_units).map(|u| instance.unit_release(u)).collect(),
        slack_periods: (0..n).map(|i| instance.due_periods(i)).collect(),
        t: 0,
        finished: vec![false; n],
        finished_count: 0,
        last_task: vec![None; n_units],
        active: vec![None; n_units],
        history: Vec::new(),
        done: false,
    }
}

/// Setup periods before the first batch of `task` can start on the idle
/// `unit` at the current period: the latest of remaining cleaning after the
/// unit's previous task, the task release and the unit release.
pub fn setup_time(
    state: &PlantState,
    instance: &ProblemInstance,
    task: usize,
    unit: usize,
) -> Result<i64, EnvError> {
    if state.is_busy(unit) {
        return Err(EnvError::UnitBusy { unit });
    }
    if instance.eligibility(task, unit).is_none() {
        return Err(EnvError::NotEligible { task, unit });
    }
    let t = state.t;
    let mut setup = (instance.task_release(task) - t)
        .max(instance.unit_release(unit) - t)
        .max(0);
    if let Some((prev, finished_at)) = state.last_task[unit] {
        setup = setup.max(instance.cleaning_periods(prev, task, unit) + finished_at - t);
    }
    Ok(setup)
}

/// Advances the plant by one period under `control` (one code per unit).
///
/// Campaign starts are validated against eligibility, finished tasks and the
/// unit's successor rule; a control that would interrupt a running campaign
/// is an error unless preemption is explicitly enabled. Starting a task that
/// already runs on another unit is legal here and priced by the allocation
/// penalty downstream.
pub fn step(
    state: &mut PlantState,
    control: &[usize],
    scenario: &Scenario,
    instance: &ProblemInstance,
    options: &EnvOptions,
    events: &mut impl EventSink,
) -> Result<StepOutcome, EnvError> {
    let n = instance.n_tasks();
    let n_units = instance.n_units();
    if state.done || state.t >= instance.horizon() {
        return Err(EnvError::EpisodeOver { t: state.t });
    }
    if control.len() != n_units {
        return Err(EnvError::ControlLength { got: control.len(), expected: n_units });
    }
    let idle = instance.idle_code();
    for (unit, &code) in control.iter().enumerate() {
        if code == 0 || code > idle {
            return Err(EnvError::ControlOutOfRange { unit, code, max: idle });
        }
    }

    // Campaign starts at the current period.
    for unit in 0..n_units {
        let code = control[unit];
        if let Some(active) = state.active[unit].as_ref() {
            if code != active.task + 1 {
                if !options.allow_preemption {
                    return Err(EnvError::Preemption {
                        unit,
                        active: active.task,
                        requested: code,
                    });
                }
                let mut aborted = state.active[unit].take().expect("checked active");
                aborted.batch_completion_periods.truncate(aborted.batches_done);
                aborted.estimated_remaining = 0;
                state.last_task[unit] = Some((aborted.task, state.t));
                state.history.push(aborted);
            } else {
                continue;
            }
        }
        if code == idle {
            continue;
        }
        let task = code - 1;
        let Some(eligibility) = instance.eligibility(task, unit) else {
            return Err(EnvError::NotEligible { task, unit });
        };
        if state.finished[task] {
            return Err(EnvError::TaskFinished { task });
        }
        if let Some((prev, _)) = state.last_task[unit] {
            if !instance.is_successor(prev, task) {
                return Err(EnvError::NotSuccessor { prev, task, unit });
            }
        }
        let setup = setup_time(state, instance, task, unit)?;
        let durations = &scenario.batch_periods[task][unit];
        let mut completions = Vec::with_capacity(durations.len());
        let mut at = state.t + setup;
        for &d in durations {
            at += d;
            completions.push(at);
        }
        events.campaign_started(unit, task, state.t, setup);
        state.active[unit] = Some(CampaignRecord {
            task,
            unit,
            start_period: state.t,
            setup_periods: setup,
            batch_completion_periods: completions,
            batches_done: 0,
            estimated_remaining: setup + eligibility.batches * eligibility.proc_periods,
        });
    }

    let t_next = state.t + 1;

    // Advance campaigns, book true batch completions, free finishing units.
    for unit in 0..n_units {
        let Some(active) = state.active[unit].as_mut() else {
            state.remaining_periods[unit] = (state.remaining_periods[unit] - 1).max(0);
            continue;
        };
        active.estimated_remaining = (active.estimated_remaining - 1).max(0);
        let task = active.task;
        let eligibility = instance.eligibility(task, unit).expect("active implies eligible");
        while active.batches_done < active.batch_completion_periods.len()
            && active.batch_completion_periods[active.batches_done] == t_next
        {
            active.batches_done += 1;
            state.inventory_kg[task] += eligibility.batch_kg;
            let left = active.batch_completion_periods.len() - active.batches_done;
            active.estimated_remaining = left as i64 * eligibility.proc_periods;
            events.batch_completed(unit, task, active.batches_done - 1, t_next, eligibility.batch_kg);
        }
        state.remaining_periods[unit] = active.estimated_remaining;
        if active.batches_done == active.batch_completion_periods.len() {
            let record = state.active[unit].take().expect("checked active");
            state.last_task[unit] = Some((task, t_next));
            state.remaining_periods[unit] = 0;
            state.history.push(record);
            if !state.finished[task] {
                state.finished[task] = true;
                state.finished_count += 1;
                let slack = due_countdown(state.slack_periods[task], task, t_next, scenario);
                state.slack_periods[task] = slack.min(0);
                events.task_finished(task, t_next);
            }
        }
    }

    state.last_control.copy_from_slice(control);

    // Due countdowns for tasks still open (finished ones froze above).
    for task in 0..n {
        if !state.finished[task] {
            if scenario.due_uncertain && t_next == scenario.confirm_at_period[task] {
                events.due_confirmed(task, t_next, scenario.confirmed_due_periods[task]);
            }
            state.slack_periods[task] = due_countdown(state.slack_periods[task], task, t_next, scenario);
        }
    }

    state.t = t_next;
    state.done = state.finished_count == n || t_next == instance.horizon();

    let reward = if state.done {
        let w = &options.reward_weights;
        w.inventory * state.inventory_kg.iter().sum::<f64>()
            + w.last_control * state.last_control.iter().map(|&c| c as f64).sum::<f64>()
            + w.remaining * state.remaining_periods.iter().sum::<i64>() as f64
            + w.slack * state.slack_periods.iter().sum::<i64>() as f64
            + w.time * t_next as f64
    } else {
        0.0
    };
    Ok(StepOutcome { reward, done: state.done })
}

/// Due countdown of an open task at `t_next`: the confirmed date once
/// revealed, otherwise the running decrement.
#[inline]
fn due_countdown(previous: i64, task: usize, t_next: i64, scenario: &Scenario) -> i64 {
    if t_next >= scenario.confirm_at_period[task] {
        scenario.confirmed_due_periods[task] - t_next
    } else {
        previous - 1
    }
}

/// Makespan (final period) and per-task tardiness of a finished episode.
pub fn makespan_and_tardiness(state: &PlantState) -> Result<(i64, Vec<i64>), EnvError> {
    if !state.done {
        return Err(EnvError::NotFinished);
    }
    let tardiness = state.slack_periods.iter().map(|&r| (-r).max(0)).collect();
    Ok((state.t, tardiness))
}
