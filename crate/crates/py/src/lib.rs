//! Python bindings over the core crate: instances, policies, single
//! rollouts, Monte-Carlo evaluation, experiment training and validation,
//! schedule audits, and chart export.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use batchplant::env::{self, UncertaintyConfig};
use batchplant::harness::{self, ExperimentConfig, HarnessError};
use batchplant::instance::ProblemInstance;
use batchplant::optimizer;
use batchplant::policy::{NetworkSpec, PolicyParams};
use batchplant::risk::{self, ObjectiveMode, ReturnSamples, RiskSummary};
use batchplant::rollout::{self, EpisodeResult, RolloutOptions};
use batchplant::seeding;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn harness_err(e: HarnessError) -> PyErr {
    match &e {
        HarnessError::Config(_)
        | HarnessError::Instance(_)
        | HarnessError::Policy(_)
        | HarnessError::Optimizer(_) => PyValueError::new_err(e.to_string()),
        HarnessError::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A scheduling problem: tasks, units, eligibility, and timing data.
#[pyclass(frozen, name = "Instance", module = "batchplant_py")]
struct PyInstance {
    inner: ProblemInstance,
}

#[pymethods]
impl PyInstance {
    /// Names of the instances shipped with the library.
    #[staticmethod]
    fn builtins() -> Vec<String> {
        ProblemInstance::builtin_names().iter().map(|s| s.to_string()).collect()
    }

    /// Loads a builtin by name or any instance JSON file by path.
    #[staticmethod]
    fn load(name_or_path: &str) -> PyResult<Self> {
        Ok(Self { inner: ProblemInstance::load(name_or_path).map_err(value_err)? })
    }

    #[staticmethod]
    fn from_json(label: &str, text: &str) -> PyResult<Self> {
        Ok(Self { inner: ProblemInstance::from_json_str(label, text).map_err(value_err)? })
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    #[getter]
    fn n_tasks(&self) -> usize {
        self.inner.n_tasks()
    }

    #[getter]
    fn n_units(&self) -> usize {
        self.inner.n_units()
    }

    #[getter]
    fn horizon(&self) -> i64 {
        self.inner.horizon()
    }

    #[getter]
    fn dt_days(&self) -> f64 {
        self.inner.dt_days()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    /// Copy of this instance with all task and unit release times zeroed.
    fn without_releases(&self) -> Self {
        Self { inner: self.inner.without_releases() }
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    fn due_days(&self) -> Vec<f64> {
        (0..self.inner.n_tasks()).map(|t| self.inner.due_days(t)).collect()
    }

    fn order_kg(&self) -> Vec<f64> {
        (0..self.inner.n_tasks()).map(|t| self.inner.order_kg(t)).collect()
    }

    fn eligible_units(&self, task: usize) -> PyResult<Vec<usize>> {
        if task >= self.inner.n_tasks() {
            return Err(PyValueError::new_err(format!("task {task} out of range")));
        }
        Ok(self.inner.eligible_units(task).to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance({:?}: {} tasks, {} units, horizon {})",
            self.inner.label(),
            self.inner.n_tasks(),
            self.inner.n_units(),
            self.inner.horizon()
        )
    }
}

/// Recurrent scheduling policy: a network spec plus its flat parameters.
#[pyclass(frozen, name = "Policy", module = "batchplant_py")]
struct PyPolicy {
    inner: PolicyParams,
}

#[pymethods]
impl PyPolicy {
    /// All-zero parameters for the standard architecture on an instance.
    #[staticmethod]
    fn zeros(instance: &Bound<'_, PyInstance>) -> PyResult<Self> {
        let spec = NetworkSpec::for_instance(&instance.get().inner);
        Ok(Self { inner: PolicyParams::zeros(spec).map_err(value_err)? })
    }

    /// Binds a flat parameter vector to the standard architecture.
    #[staticmethod]
    fn from_theta(instance: &Bound<'_, PyInstance>, theta: Vec<f64>) -> PyResult<Self> {
        let spec = NetworkSpec::for_instance(&instance.get().inner);
        Ok(Self { inner: PolicyParams::new(spec, theta).map_err(value_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: PolicyParams::load(&path).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(runtime_err)
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().to_vec()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.theta().len()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.spec().input_dim
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.inner.spec().output_dim
    }

    fn __repr__(&self) -> String {
        format!(
            "Policy({} -> {}, {} parameters)",
            self.inner.spec().input_dim,
            self.inner.spec().output_dim,
            self.inner.theta().len()
        )
    }
}

/// Result of one simulated episode.
#[pyclass(frozen, name = "Episode", module = "batchplant_py")]
struct PyEpisode {
    inner: EpisodeResult,
}

#[pymethods]
impl PyEpisode {
    #[getter]
    fn raw_return(&self) -> f64 {
        self.inner.raw_return
    }

    #[getter]
    fn penalized_return(&self) -> f64 {
        self.inner.penalized_return
    }

    #[getter]
    fn total_penalty(&self) -> f64 {
        self.inner.total_penalty
    }

    #[getter]
    fn violated(&self) -> bool {
        self.inner.violated
    }

    #[getter]
    fn makespan(&self) -> i64 {
        self.inner.makespan
    }

    #[getter]
    fn tardiness(&self) -> Vec<i64> {
        self.inner.tardiness.clone()
    }

    /// Executed campaigns as a list of dicts, one per campaign.
    fn schedule<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let rows = PyList::empty(py);
        for event in &self.inner.schedule_events {
            let row = PyDict::new(py);
            row.set_item("task", event.task)?;
            row.set_item("unit", event.unit)?;
            row.set_item("start_period", event.start_period)?;
            row.set_item("setup_periods", event.setup_periods)?;
            row.set_item("batch_completion_periods", event.batch_completion_periods.clone())?;
            row.set_item("batches_done", event.batches_done)?;
            rows.append(row)?;
        }
        Ok(rows)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Episode(return {}, makespan {}, {} campaigns)",
            self.inner.raw_return,
            self.inner.makespan,
            self.inner.schedule_events.len()
        )
    }
}

/// Monte-Carlo returns from evaluating one policy.
#[pyclass(frozen, name = "ReturnStats", module = "batchplant_py")]
struct PyReturnStats {
    inner: ReturnSamples,
}

fn summary_dict<'py>(py: Python<'py>, summary: &RiskSummary) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("mean", summary.mean)?;
    out.set_item("std", summary.std)?;
    out.set_item("std_degenerate", summary.std_degenerate)?;
    out.set_item("var_beta", summary.var_beta)?;
    out.set_item("cvar_beta", summary.cvar_beta)?;
    out.set_item("beta", summary.beta)?;
    out.set_item("n_samples", summary.n_samples)?;
    out.set_item("f_sa", summary.f_sa)?;
    out.set_item("f_lb", summary.f_lb)?;
    out.set_item("confidence", summary.confidence)?;
    Ok(out)
}

#[pymethods]
impl PyReturnStats {
    #[getter]
    fn z(&self) -> Vec<f64> {
        self.inner.z.clone()
    }

    #[getter]
    fn z_phi(&self) -> Vec<f64> {
        self.inner.z_phi.clone()
    }

    #[getter]
    fn violated(&self) -> Vec<bool> {
        self.inner.violated.clone()
    }

    #[getter]
    fn seeds(&self) -> Vec<u64> {
        self.inner.seeds.clone()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Distribution summary of the raw returns.
    #[pyo3(signature = (beta = 0.2, upsilon = 0.05))]
    fn summarize<'py>(&self, py: Python<'py>, beta: f64, upsilon: f64) -> PyResult<Bound<'py, PyDict>> {
        let summary = risk::summarize(&self.inner, beta, upsilon).map_err(value_err)?;
        summary_dict(py, &summary)
    }

    /// Scalar training objective: "mean" or "cvar" over penalized returns.
    #[pyo3(signature = (mode = "mean", beta = 0.2))]
    fn objective(&self, mode: &str, beta: f64) -> PyResult<f64> {
        let mode = match mode {
            "mean" => ObjectiveMode::MeanPenalized,
            "cvar" => ObjectiveMode::CVaRPenalized { beta },
            other => {
                return Err(PyValueError::new_err(format!(
                    "objective mode must be \"mean\" or \"cvar\", got {other:?}"
                )))
            }
        };
        risk::objective(&self.inner, mode).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("ReturnStats({} episodes)", self.inner.n())
    }
}

/// Runs one episode and returns it. The scenario is drawn from the seed;
/// with both uncertainty flags off the plant is deterministic.
#[pyfunction]
#[pyo3(signature = (policy, instance, seed = 0, processing_uncertain = false, due_uncertain = false, misspecify = false, k_pt = 0, k_dd = 0.0))]
#[allow(clippy::too_many_arguments)]
fn rollout_episode(
    policy: &Bound<'_, PyPolicy>,
    instance: &Bound<'_, PyInstance>,
    seed: u64,
    processing_uncertain: bool,
    due_uncertain: bool,
    misspecify: bool,
    k_pt: i64,
    k_dd: f64,
) -> PyResult<PyEpisode> {
    let uncertainty = UncertaintyConfig {
        processing_uncertain,
        due_uncertain,
        k_pt_periods: k_pt,
        k_dd_days: k_dd,
        ..UncertaintyConfig::default()
    };
    let options = RolloutOptions { misspecify_model: misspecify, ..RolloutOptions::standard() };
    let mut rng = seeding::rng(seeding::mix(seed, &[seeding::PURPOSE_ROLLOUT]));
    let scenario = env::sample_scenario(&instance.get().inner, &uncertainty, misspecify, &mut rng);
    let inner = rollout::run_episode(&policy.get().inner, &instance.get().inner, &scenario, &options)
        .map_err(value_err)?;
    Ok(PyEpisode { inner })
}

/// Evaluates a policy over `n_episodes` seeded scenarios in parallel.
#[pyfunction]
#[pyo3(signature = (policy, instance, n_episodes, seed = 0, processing_uncertain = false, due_uncertain = false))]
fn evaluate(
    py: Python<'_>,
    policy: &Bound<'_, PyPolicy>,
    instance: &Bound<'_, PyInstance>,
    n_episodes: usize,
    seed: u64,
    processing_uncertain: bool,
    due_uncertain: bool,
) -> PyResult<PyReturnStats> {
    let uncertainty = UncertaintyConfig {
        processing_uncertain,
        due_uncertain,
        ..UncertaintyConfig::default()
    };
    let params = &policy.get().inner;
    let inst = &instance.get().inner;
    let options = RolloutOptions::standard();
    let inner = py
        .detach(|| rollout::evaluate_policy(params, inst, &uncertainty, n_episodes, seed, &options))
        .map_err(value_err)?;
    Ok(PyReturnStats { inner })
}

/// The configuration behind a named experiment, as a dict.
#[pyfunction]
#[pyo3(signature = (experiment, instance = "instance1"))]
fn experiment_preset<'py>(
    py: Python<'py>,
    experiment: &str,
    instance: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let config = ExperimentConfig::preset(experiment, instance).map_err(harness_err)?;
    let out = PyDict::new(py);
    out.set_item("id", &config.id)?;
    out.set_item("instance", &config.instance)?;
    out.set_item("processing_uncertainty", config.processing_uncertainty)?;
    out.set_item("due_uncertainty", config.due_uncertainty)?;
    out.set_item("finite_release_times", config.finite_release_times)?;
    out.set_item(
        "objective",
        match config.objective {
            ObjectiveMode::MeanPenalized => "mean".to_string(),
            ObjectiveMode::CVaRPenalized { beta } => format!("cvar({beta})"),
        },
    )?;
    out.set_item("k_pt_periods", config.k_pt_periods)?;
    out.set_item("k_dd_days", config.k_dd_days)?;
    out.set_item("training_samples", config.training_samples)?;
    out.set_item("validation_episodes", config.validation_episodes)?;
    Ok(out)
}

fn build_training_setup(
    experiment: &str,
    instance: &str,
    population: Option<usize>,
    iterations: Option<usize>,
    samples: Option<usize>,
) -> PyResult<(ExperimentConfig, optimizer::SwarmConfig)> {
    let mut config = ExperimentConfig::preset(experiment, instance).map_err(harness_err)?;
    if config.misspecified() {
        return Err(PyValueError::new_err(format!(
            "experiment {experiment} only validates a pretrained policy"
        )));
    }
    if let Some(n) = samples {
        config.training_samples = n;
    }
    config.validate().map_err(harness_err)?;
    let mut swarm = harness::preset_swarm();
    if let Some(p) = population {
        swarm.population = p;
    }
    if let Some(k) = iterations {
        swarm.iterations = k;
    }
    swarm.validate().map_err(value_err)?;
    Ok((config, swarm))
}

/// Trains a policy for a named experiment. Returns a dict with the
/// trained `policy`, the `best_j` score, and the per-iteration `history`.
#[pyfunction]
#[pyo3(signature = (experiment, instance = "instance1", seed = 0, population = None, iterations = None, samples = None))]
fn train<'py>(
    py: Python<'py>,
    experiment: &str,
    instance: &str,
    seed: u64,
    population: Option<usize>,
    iterations: Option<usize>,
    samples: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let (config, swarm) = build_training_setup(experiment, instance, population, iterations, samples)?;
    let inst = config.load_instance().map_err(harness_err)?;
    let spec = NetworkSpec::for_instance(&inst);
    let state = py
        .detach(|| {
            let objective = harness::training_objective(&config, &inst, &spec);
            optimizer::optimize(&objective, &swarm, spec.param_count(), seed)
        })
        .map_err(value_err)?;
    let params = PolicyParams::new(spec, state.global_best.clone()).map_err(runtime_err)?;
    let out = PyDict::new(py);
    out.set_item("policy", PyPolicy { inner: params }.into_pyobject(py)?)?;
    out.set_item("best_j", state.global_best_score)?;
    let history = PyList::empty(py);
    for record in &state.history {
        let row = PyDict::new(py);
        row.set_item("iteration", record.iteration)?;
        row.set_item(
            "best_j",
            if record.best_j.is_finite() { Some(record.best_j) } else { None },
        )?;
        history.append(row)?;
    }
    out.set_item("history", history)?;
    Ok(out)
}

/// Validates a policy under a named condition: return distribution,
/// feasibility bound, schedule audit, and the first episode for charting.
#[pyfunction]
#[pyo3(signature = (policy, experiment, instance = "instance1", n_mc = 500, seed = 0))]
fn validate<'py>(
    py: Python<'py>,
    policy: &Bound<'_, PyPolicy>,
    experiment: &str,
    instance: &str,
    n_mc: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = ExperimentConfig::preset(experiment, instance).map_err(harness_err)?;
    let inst = config.load_instance().map_err(harness_err)?;
    let params = &policy.get().inner;
    let report = py
        .detach(|| harness::validate_policy(params, &inst, &config, n_mc, seed))
        .map_err(harness_err)?;
    let out = PyDict::new(py);
    out.set_item("experiment", &report.experiment.id)?;
    out.set_item("seed", report.seed)?;
    out.set_item("n_episodes", report.n_episodes)?;
    out.set_item("summary", summary_dict(py, &report.summary)?)?;
    out.set_item("penalized_mean", report.penalized_mean)?;
    out.set_item("schedule_violations", report.schedule_violations.clone())?;
    let episodes = PyList::empty(py);
    for episode in &report.episodes {
        let row = PyDict::new(py);
        row.set_item("seed", episode.seed)?;
        row.set_item("raw_return", episode.raw_return)?;
        row.set_item("penalized_return", episode.penalized_return)?;
        row.set_item("violated", episode.violated)?;
        row.set_item("makespan", episode.makespan)?;
        episodes.append(row)?;
    }
    out.set_item("episodes", episodes)?;
    out.set_item(
        "sample_episode",
        PyEpisode { inner: report.sample_episode }.into_pyobject(py)?,
    )?;
    Ok(out)
}

/// Runs a full experiment and writes policy, metrics, timing, training
/// curve, and Gantt chart into `out_dir`. Pass `policy` for M conditions.
#[pyfunction]
#[pyo3(signature = (experiment, out_dir, instance = "instance1", seed = 0, population = None, iterations = None, samples = None, n_mc = None, policy = None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    experiment: &str,
    out_dir: PathBuf,
    instance: &str,
    seed: u64,
    population: Option<usize>,
    iterations: Option<usize>,
    samples: Option<usize>,
    n_mc: Option<usize>,
    policy: Option<&Bound<'_, PyPolicy>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = ExperimentConfig::preset(experiment, instance).map_err(harness_err)?;
    if let Some(n) = samples {
        config.training_samples = n;
    }
    if let Some(n) = n_mc {
        config.validation_episodes = n;
    }
    config.validate().map_err(harness_err)?;
    let mut swarm = harness::preset_swarm();
    if let Some(p) = population {
        swarm.population = p;
    }
    if let Some(k) = iterations {
        swarm.iterations = k;
    }
    swarm.validate().map_err(value_err)?;
    let pretrained = policy.map(|p| p.get().inner.clone());
    let outcome = py
        .detach(|| harness::run_experiment(&config, &swarm, seed, pretrained, &out_dir))
        .map_err(harness_err)?;
    let out = PyDict::new(py);
    out.set_item("best_j", outcome.best_j)?;
    out.set_item("metrics_path", outcome.metrics_path)?;
    out.set_item("summary", summary_dict(py, &outcome.report.summary)?)?;
    out.set_item("policy", PyPolicy { inner: outcome.policy }.into_pyobject(py)?)?;
    Ok(out)
}

/// Audits an episode's schedule against the plant rules; returns one
/// message per violation, empty when clean.
#[pyfunction]
fn check_schedule(
    episode: &Bound<'_, PyEpisode>,
    instance: &Bound<'_, PyInstance>,
) -> Vec<String> {
    harness::check_schedule(&episode.get().inner.schedule_events, &instance.get().inner)
        .iter()
        .map(|v| v.to_string())
        .collect()
}

/// Renders an episode's schedule as an SVG Gantt chart.
#[pyfunction]
fn gantt_svg(episode: &Bound<'_, PyEpisode>, instance: &Bound<'_, PyInstance>) -> String {
    harness::export_gantt(&episode.get().inner, &instance.get().inner)
}

/// Warm per-decision latency statistics, as a dict of seconds.
#[pyfunction]
#[pyo3(signature = (policy, instance, n_steps = 1000, seed = 0))]
fn decision_latency<'py>(
    py: Python<'py>,
    policy: &Bound<'_, PyPolicy>,
    instance: &Bound<'_, PyInstance>,
    n_steps: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = &policy.get().inner;
    let inst = &instance.get().inner;
    let stats = py
        .detach(|| {
            harness::measure_decision_latency(
                params,
                inst,
                &UncertaintyConfig::default(),
                n_steps,
                seed,
            )
        })
        .map_err(harness_err)?;
    let out = PyDict::new(py);
    out.set_item("n_samples", stats.n_samples)?;
    out.set_item("mean_seconds", stats.mean_seconds)?;
    out.set_item("p95_seconds", stats.p95_seconds)?;
    out.set_item("max_seconds", stats.max_seconds)?;
    out.set_item("variance_seconds2", stats.variance_seconds2)?;
    Ok(out)
}

#[pymodule]
fn batchplant_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyEpisode>()?;
    m.add_class::<PyReturnStats>()?;
    m.add_function(wrap_pyfunction!(rollout_episode, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(experiment_preset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(check_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(gantt_svg, m)?)?;
    m.add_function(wrap_pyfunction!(decision_latency, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
