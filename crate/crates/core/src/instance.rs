//! Problem data: tasks (client orders), units, eligibility, successor rules,
//! cleaning times, release times, and the discretization grid.
//!
//! Instances are loaded from a versioned JSON schema in which every duration
//! is given in days. All day-valued fields are converted to integer periods
//! (`days / dt_days`) at load time, so the rest of the crate works purely in
//! integer time and never touches floating-point clock arithmetic.
//!
//! Task ids are contiguous `1..=N` and unit ids contiguous `1..=n_u` in the
//! schema; the in-memory representation uses zero-based indices throughout.
//! Control code `N+1` (one past the last task id) means "stay idle".

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Supported instance schema version.
pub const SCHEMA_VERSION: u32 = 1;

const INSTANCE1_JSON: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/instance1.json"));
const INSTANCE2_JSON: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/instance2.json"));

/// Errors raised while loading or querying an instance.
#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("instance JSON is malformed: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported schema_version {found}, expected {SCHEMA_VERSION}")]
    SchemaVersion { found: u32 },
    #[error("invalid instance at {path}: {message}")]
    Invalid { path: String, message: String },
    #[error("task index {task} is not eligible on unit index {unit}")]
    NotEligible { task: usize, unit: usize },
    #[error("unknown builtin instance {name:?} (available: instance1, instance2)")]
    UnknownBuiltin { name: String },
    #[error("cannot read instance file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Raw schema: one client order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskRow {
    id: u32,
    order_size_kg: f64,
    due_date_days: f64,
    release_days: f64,
    successors: Vec<u32>,
}

/// Raw schema: one eligibility entry of a unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EligibleRow {
    task: u32,
    batch_kg: f64,
    proc_days: f64,
}

/// Raw schema: one unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitRow {
    id: u32,
    release_days: f64,
    eligible: Vec<EligibleRow>,
}

/// Raw schema: one cleaning requirement between successive tasks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CleaningRow {
    from: u32,
    to: u32,
    days: f64,
}

/// Raw schema: whole document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    schema_version: u32,
    dt_days: f64,
    horizon_periods: u32,
    tasks: Vec<TaskRow>,
    units: Vec<UnitRow>,
    cleaning: Vec<CleaningRow>,
}

/// Eligibility data for one (task, unit) pair, in periods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eligibility {
    /// Maximum batch size in kilograms.
    pub batch_kg: f64,
    /// Expected periods per batch.
    pub proc_periods: i64,
    /// Batches required to cover the order size (ceiling rule).
    pub batches: i64,
}

/// Immutable problem definition with all derived period quantities.
///
/// Safe to share across threads; every accessor is read-only.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    label: String,
    dt_days: f64,
    horizon: i64,
    n_tasks: usize,
    n_units: usize,
    order_kg: Vec<f64>,
    due_days: Vec<f64>,
    due_periods: Vec<i64>,
    task_release_periods: Vec<i64>,
    unit_release_periods: Vec<i64>,
    /// Dense task-major eligibility table, `None` where a task cannot run.
    eligible: Vec<Option<Eligibility>>,
    eligible_tasks_per_unit: Vec<Vec<usize>>,
    eligible_units_per_task: Vec<Vec<usize>>,
    successor: Vec<bool>,
    successor_lists: Vec<Vec<usize>>,
    cleaning: Vec<i64>,
}

impl ProblemInstance {
    /// Parses and validates an instance from its JSON text.
    pub fn from_json_str(label: &str, text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Self::from_file(label, file)
    }

    /// Reads, parses and validates an instance file.
    pub fn from_path(path: &Path) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "instance".to_string());
        Self::from_json_str(&label, &text)
    }

    /// Returns a bundled case study by name.
    pub fn builtin(name: &str) -> Result<Self, InstanceError> {
        match name {
            "instance1" => Self::from_json_str("instance1", INSTANCE1_JSON),
            "instance2" => Self::from_json_str("instance2", INSTANCE2_JSON),
            other => Err(InstanceError::UnknownBuiltin {
                name: other.to_string(),
            }),
        }
    }

    /// Names accepted by [`ProblemInstance::builtin`].
    pub fn builtin_names() -> &'static [&'static str] {
        &["instance1", "instance2"]
    }

    /// Resolves a builtin name or a filesystem path, builtins first.
    pub fn load(name_or_path: &str) -> Result<Self, InstanceError> {
        if Self::builtin_names().contains(&name_or_path) {
            Self::builtin(name_or_path)
        } else {
            Self::from_path(Path::new(name_or_path))
        }
    }

    fn from_file(label: &str, file: InstanceFile) -> Result<Self, InstanceError> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(InstanceError::SchemaVersion {
                found: file.schema_version,
            });
        }
        let invalid = |path: &str, message: String| InstanceError::Invalid {
            path: path.to_string(),
            message,
        };
        if !(file.dt_days.is_finite() && file.dt_days > 0.0) {
            return Err(invalid("dt_days", format!("must be positive, got {}", file.dt_days)));
        }
        if file.horizon_periods == 0 {
            return Err(invalid("horizon_periods", "must be at least 1".into()));
        }
        let dt = file.dt_days;
        let n_tasks = file.tasks.len();
        let n_units = file.units.len();
        if n_tasks == 0 {
            return Err(invalid("tasks", "at least one task required".into()));
        }
        if n_units == 0 {
            return Err(invalid("units", "at least one unit required".into()));
        }

        let mut tasks = file.tasks.clone();
        tasks.sort_by_key(|t| t.id);
        for (idx, task) in tasks.iter().enumerate() {
            if task.id as usize != idx + 1 {
                return Err(invalid(
                    "tasks",
                    format!("task ids must be exactly 1..={n_tasks}, missing or duplicate id near {}", task.id),
                ));
            }
        }
        let mut units = file.units.clone();
        units.sort_by_key(|u| u.id);
        for (idx, unit) in units.iter().enumerate() {
            if unit.id as usize != idx + 1 {
                return Err(invalid(
                    "units",
                    format!("unit ids must be exactly 1..={n_units}, missing or duplicate id near {}", unit.id),
                ));
            }
        }

        let mut order_kg = Vec::with_capacity(n_tasks);
        let mut due_days = Vec::with_capacity(n_tasks);
        let mut due_periods = Vec::with_capacity(n_tasks);
        let mut task_release_periods = Vec::with_capacity(n_tasks);
        let mut successor = vec![false; n_tasks * n_tasks];
        let mut successor_lists = vec![Vec::new(); n_tasks];
        for (idx, task) in tasks.iter().enumerate() {
            let path = format!("tasks[{idx}]");
            if !(task.order_size_kg.is_finite() && task.order_size_kg > 0.0) {
                return Err(invalid(
                    &format!("{path}.order_size_kg"),
                    format!("must be positive, got {}", task.order_size_kg),
                ));
            }
            if !(task.due_date_days.is_finite() && task.due_date_days > 0.0) {
                return Err(invalid(
                    &format!("{path}.due_date_days"),
                    format!("must be positive, got {}", task.due_date_days),
                ));
            }
            order_kg.push(task.order_size_kg);
            due_days.push(task.due_date_days);
            due_periods.push(days_to_periods(task.due_date_days, dt, &format!("{path}.due_date_days"))?);
            if !(task.release_days.is_finite() && task.release_days >= 0.0) {
                return Err(invalid(
                    &format!("{path}.release_days"),
                    format!("must be non-negative, got {}", task.release_days),
                ));
            }
            task_release_periods.push(days_to_periods(task.release_days, dt, &format!("{path}.release_days"))?);
            let mut seen = BTreeSet::new();
            for &succ in &task.successors {
                if succ == 0 || succ as usize > n_tasks {
                    return Err(invalid(
                        &format!("{path}.successors"),
                        format!("references unknown task id {succ}"),
                    ));
                }
                if succ == task.id {
                    log::warn!("task {} lists itself as successor; entry is unreachable", task.id);
                }
                if seen.insert(succ) {
                    successor[idx * n_tasks + (succ as usize - 1)] = true;
                    successor_lists[idx].push(succ as usize - 1);
                }
            }
            successor_lists[idx].sort_unstable();
        }

        let mut unit_release_periods = Vec::with_capacity(n_units);
        let mut eligible: Vec<Option<Eligibility>> = vec![None; n_tasks * n_units];
        let mut eligible_tasks_per_unit = vec![Vec::new(); n_units];
        for (u_idx, unit) in units.iter().enumerate() {
            let path = format!("units[{u_idx}]");
            if !(unit.release_days.is_finite() && unit.release_days >= 0.0) {
                return Err(invalid(
                    &format!("{path}.release_days"),
                    format!("must be non-negative, got {}", unit.release_days),
                ));
            }
            unit_release_periods.push(days_to_periods(unit.release_days, dt, &format!("{path}.release_days"))?);
            for (e_idx, row) in unit.eligible.iter().enumerate() {
                let epath = format!("{path}.eligible[{e_idx}]");
                if row.task == 0 || row.task as usize > n_tasks {
                    return Err(invalid(&format!("{epath}.task"), format!("references unknown task id {}", row.task)));
                }
                let t_idx = row.task as usize - 1;
                if !(row.batch_kg.is_finite() && row.batch_kg > 0.0) {
                    return Err(invalid(&format!("{epath}.batch_kg"), format!("must be positive, got {}", row.batch_kg)));
                }
                if !(row.proc_days.is_finite() && row.proc_days > 0.0) {
                    return Err(invalid(&format!("{epath}.proc_days"), format!("must be positive, got {}", row.proc_days)));
                }
                let proc_periods = days_to_periods(row.proc_days, dt, &format!("{epath}.proc_days"))?;
                if proc_periods < 1 {
                    return Err(invalid(&format!("{epath}.proc_days"), "must be at least one period".into()));
                }
                if eligible[t_idx * n_units + u_idx].is_some() {
                    return Err(invalid(&format!("{epath}.task"), format!("duplicate eligibility for task {}", row.task)));
                }
                let batches = ceil_batches(order_kg[t_idx], row.batch_kg);
                eligible[t_idx * n_units + u_idx] = Some(Eligibility {
                    batch_kg: row.batch_kg,
                    proc_periods,
                    batches,
                });
                eligible_tasks_per_unit[u_idx].push(t_idx);
            }
            eligible_tasks_per_unit[u_idx].sort_unstable();
        }
        let mut eligible_units_per_task = vec![Vec::new(); n_tasks];
        for t in 0..n_tasks {
            for u in 0..n_units {
                if eligible[t * n_units + u].is_some() {
                    eligible_units_per_task[t].push(u);
                }
            }
            if eligible_units_per_task[t].is_empty() {
                return Err(invalid(
                    &format!("tasks[{t}]"),
                    format!("task {} is eligible on no unit", t + 1),
                ));
            }
        }

        let mut cleaning = vec![0i64; n_tasks * n_tasks];
        let mut declared = vec![false; n_tasks * n_tasks];
        for (c_idx, row) in file.cleaning.iter().enumerate() {
            let path = format!("cleaning[{c_idx}]");
            for (field, id) in [("from", row.from), ("to", row.to)] {
                if id == 0 || id as usize > n_tasks {
                    return Err(invalid(&format!("{path}.{field}"), format!("references unknown task id {id}")));
                }
            }
            let from = row.from as usize - 1;
            let to = row.to as usize - 1;
            if !successor[from * n_tasks + to] {
                return Err(invalid(
                    &path,
                    format!("cleaning pair {}->{} is not a feasible successor pair", row.from, row.to),
                ));
            }
            if !(row.days.is_finite() && row.days >= 0.0) {
                return Err(invalid(&format!("{path}.days"), format!("must be non-negative, got {}", row.days)));
            }
            if declared[from * n_tasks + to] {
                return Err(invalid(&path, format!("duplicate cleaning pair {}->{}", row.from, row.to)));
            }
            declared[from * n_tasks + to] = true;
            cleaning[from * n_tasks + to] = days_to_periods(row.days, dt, &format!("{path}.days"))?;
        }
        let mut defaulted = Vec::new();
        for m in 0..n_tasks {
            for &i in &successor_lists[m] {
                if !declared[m * n_tasks + i] {
                    defaulted.push(format!("{}->{}", m + 1, i + 1));
                }
            }
        }
        if !defaulted.is_empty() {
            log::warn!(
                "instance {label}: successor pairs without cleaning entries default to 0 periods: {}",
                defaulted.join(", ")
            );
        }

        Ok(ProblemInstance {
            label: label.to_string(),
            dt_days: dt,
            horizon: i64::from(file.horizon_periods),
            n_tasks,
            n_units,
            order_kg,
            due_days,
            due_periods,
            task_release_periods,
            unit_release_periods,
            eligible,
            eligible_tasks_per_unit,
            eligible_units_per_task,
            successor,
            successor_lists,
            cleaning,
        })
    }

    /// Serializes back to the JSON schema (canonical ordering, version 1).
    pub fn to_json_string(&self) -> String {
        let file = InstanceFile {
            schema_version: SCHEMA_VERSION,
            dt_days: self.dt_days,
            horizon_periods: self.horizon as u32,
            tasks: (0..self.n_tasks)
                .map(|t| TaskRow {
                    id: (t + 1) as u32,
                    order_size_kg: self.order_kg[t],
                    due_date_days: self.due_days[t],
                    release_days: self.task_release_periods[t] as f64 * self.dt_days,
                    successors: self.successor_lists[t].iter().map(|&s| (s + 1) as u32).collect(),
                })
                .collect(),
            units: (0..self.n_units)
                .map(|u| UnitRow {
                    id: (u + 1) as u32,
                    release_days: self.unit_release_periods[u] as f64 * self.dt_days,
                    eligible: self.eligible_tasks_per_unit[u]
                        .iter()
                        .map(|&t| {
                            let e = self.eligible[t * self.n_units + u].unwrap();
                            EligibleRow {
                                task: (t + 1) as u32,
                                batch_kg: e.batch_kg,
                                proc_days: e.proc_periods as f64 * self.dt_days,
                            }
                        })
                        .collect(),
                })
                .collect(),
            cleaning: {
                let mut rows = Vec::new();
                for m in 0..self.n_tasks {
                    for &i in &self.successor_lists[m] {
                        let periods = self.cleaning[m * self.n_tasks + i];
                        if periods > 0 {
                            rows.push(CleaningRow {
                                from: (m + 1) as u32,
                                to: (i + 1) as u32,
                                days: periods as f64 * self.dt_days,
                            });
                        }
                    }
                }
                rows
            },
        };
        serde_json::to_string_pretty(&file).expect("instance schema serializes")
    }

    /// Copy of this instance with every task and unit release time zeroed.
    ///
    /// Used by experiments whose finite-release-times factor is off.
    pub fn without_releases(&self) -> Self {
        let mut out = self.clone();
        out.task_release_periods.iter_mut().for_each(|r| *r = 0);
        out.unit_release_periods.iter_mut().for_each(|r| *r = 0);
        out
    }

    /// Display label (builtin name or file stem).
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Number of tasks N.
    #[inline]
    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    /// Number of units.
    #[inline]
    pub fn n_units(&self) -> usize {
        self.n_units
    }

    /// Scheduling horizon T in periods.
    #[inline]
    pub fn horizon(&self) -> i64 {
        self.horizon
    }

    /// Length of one period in days.
    #[inline]
    pub fn dt_days(&self) -> f64 {
        self.dt_days
    }

    /// Control code meaning "stay idle" (= N+1).
    #[inline]
    pub fn idle_code(&self) -> usize {
        self.n_tasks + 1
    }

    /// Dimension of the observable state vector (2N + 2n_u + 1).
    #[inline]
    pub fn state_dim(&self) -> usize {
        2 * self.n_tasks + 2 * self.n_units + 1
    }

    /// Order size of a task in kilograms.
    #[inline]
    pub fn order_kg(&self, task: usize) -> f64 {
        self.order_kg[task]
    }

    /// Expected due date of a task in periods.
    #[inline]
    pub fn due_periods(&self, task: usize) -> i64 {
        self.due_periods[task]
    }

    /// Expected due date of a task in days (the Poisson rate under due-date
    /// uncertainty).
    #[inline]
    pub fn due_days(&self, task: usize) -> f64 {
        self.due_days[task]
    }

    /// Earliest period at which a task may start.
    #[inline]
    pub fn task_release(&self, task: usize) -> i64 {
        self.task_release_periods[task]
    }

    /// Earliest period at which a unit is available.
    #[inline]
    pub fn unit_release(&self, unit: usize) -> i64 {
        self.unit_release_periods[unit]
    }

    /// Eligibility entry for (task, unit), `None` when the unit cannot run it.
    #[inline]
    pub fn eligibility(&self, task: usize, unit: usize) -> Option<&Eligibility> {
        self.eligible[task * self.n_units + unit].as_ref()
    }

    /// Ascending task indices a unit can run.
    #[inline]
    pub fn eligible_tasks(&self, unit: usize) -> &[usize] {
        &self.eligible_tasks_per_unit[unit]
    }

    /// Ascending unit indices that can run a task.
    #[inline]
    pub fn eligible_units(&self, task: usize) -> &[usize] {
        &self.eligible_units_per_task[task]
    }

    /// Batches required to process a task on a unit (ceiling of order/batch).
    pub fn batches_required(&self, task: usize, unit: usize) -> Result<i64, InstanceError> {
        self.eligibility(task, unit)
            .map(|e| e.batches)
            .ok_or(InstanceError::NotEligible { task, unit })
    }

    /// Expected periods per batch for (task, unit), if eligible.
    #[inline]
    pub fn proc_periods(&self, task: usize, unit: usize) -> Option<i64> {
        self.eligibility(task, unit).map(|e| e.proc_periods)
    }

    /// Expected whole-campaign duration (batches x periods per batch).
    #[inline]
    pub fn campaign_periods(&self, task: usize, unit: usize) -> Option<i64> {
        self.eligibility(task, unit).map(|e| e.batches * e.proc_periods)
    }

    /// Whether `next` may directly follow `prev` in any unit.
    #[inline]
    pub fn is_successor(&self, prev: usize, next: usize) -> bool {
        self.successor[prev * self.n_tasks + next]
    }

    /// Ascending successor indices of a task.
    #[inline]
    pub fn successors(&self, task: usize) -> &[usize] {
        &self.successor_lists[task]
    }

    /// Cleaning periods required between two successive tasks in a unit.
    ///
    /// The published data is unit-independent; the unit argument is accepted
    /// so unit-dependent cleaning can be added without changing call sites.
    /// Pairs absent from the cleaning table are 0.
    #[inline]
    pub fn cleaning_periods(&self, prev: usize, next: usize, _unit: usize) -> i64 {
        self.cleaning[prev * self.n_tasks + next]
    }

    /// Full successor closure with effective cleaning periods (declared or
    /// defaulted to 0), ascending by (predecessor, successor).
    pub fn cleaning_closure(&self) -> Vec<(usize, usize, i64)> {
        let mut out = Vec::new();
        for m in 0..self.n_tasks {
            for &i in &self.successor_lists[m] {
                out.push((m, i, self.cleaning[m * self.n_tasks + i]));
            }
        }
        out
    }
}

/// Converts a day value to integer periods, requiring an exact multiple.
fn days_to_periods(days: f64, dt: f64, path: &str) -> Result<i64, InstanceError> {
    let ratio = days / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-9 * ratio.abs().max(1.0) {
        return Err(InstanceError::Invalid {
            path: path.to_string(),
            message: format!("{days} days is not a multiple of dt_days = {dt}"),
        });
    }
    Ok(rounded as i64)
}

/// Minimal number of batches covering `order_kg` at `batch_kg` per batch.
fn ceil_batches(order_kg: f64, batch_kg: f64) -> i64 {
    let ratio = order_kg / batch_kg;
    let nearest = ratio.round();
    let batches = if (ratio - nearest).abs() < 1e-9 { nearest } else { ratio.ceil() };
    (batches as i64).max(1)
}
