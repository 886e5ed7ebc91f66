//! Feasible decision sets, the latent-to-decision mapping, and the
//! double-allocation penalty.
//!
//! Each period every unit gets an ordered list of admissible control codes.
//! A busy unit may only continue its campaign; a free unit may start any
//! eligible, unfinished task that the successor rules admit after its
//! previous task, or stay idle. Idle is always admissible for a free unit,
//! so the lists are never empty. The one rule not encoded in the lists is
//! exclusivity of a task across units, which is priced by
//! [`double_allocation_penalty`] instead.

use serde::{Deserialize, Serialize};

use crate::env::PlantState;
use crate::instance::ProblemInstance;

/// Ordered admissible control codes per unit (ascending, idle code last
/// where admitted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibleSets {
    per_unit: Vec<Vec<usize>>,
}

impl FeasibleSets {
    /// Empty sets sized for `n_units`, ready for [`feasible_sets_into`].
    pub fn with_units(n_units: usize) -> Self {
        Self { per_unit: vec![Vec::new(); n_units] }
    }

    /// Admissible codes of one unit.
    #[inline]
    pub fn unit(&self, unit: usize) -> &[usize] {
        &self.per_unit[unit]
    }

    /// Number of units covered.
    #[inline]
    pub fn n_units(&self) -> usize {
        self.per_unit.len()
    }
}

/// Weight and norm of the double-allocation penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub kappa_g: f64,
    pub norm: PenaltyNorm,
}

/// Norm applied to the vector of positive allocation excesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyNorm {
    L1,
    L2,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { kappa_g: 250.0, norm: PenaltyNorm::L2 }
    }
}

/// Computes the admissible control codes of every unit into `sets`,
/// reusing its buffers.
pub fn feasible_sets_into(
    state: &PlantState,
    instance: &ProblemInstance,
    sets: &mut FeasibleSets,
) {
    let idle = instance.idle_code();
    debug_assert_eq!(sets.per_unit.len(), instance.n_units());
    for unit in 0..instance.n_units() {
        let list = &mut sets.per_unit[unit];
        list.clear();
        if let Some(task) = state.active_task(unit) {
            list.push(task + 1);
            continue;
        }
        let prev = state.last_task[unit].map(|(task, _)| task);
        for &task in instance.eligible_tasks(unit) {
            if state.finished[task] {
                continue;
            }
            if let Some(prev) = prev {
                if !instance.is_successor(prev, task) {
                    continue;
                }
            }
            list.push(task + 1);
        }
        list.push(idle);
    }
}

/// Allocating variant of [`feasible_sets_into`].
pub fn feasible_sets(state: &PlantState, instance: &ProblemInstance) -> FeasibleSets {
    let mut sets = FeasibleSets::with_units(instance.n_units());
    feasible_sets_into(state, instance, &mut sets);
    sets
}

/// Maps one latent component in [0, 6] to an index into a list of length
/// `k`: affine scaling to [0, k-1], then nearest integer with half-away-
/// from-zero ties.
#[inline]
fn latent_index(latent: f64, k: usize) -> usize {
    if k == 1 {
        return 0;
    }
    let scaled = latent * (k - 1) as f64 / 6.0;
    (scaled.round() as usize).min(k - 1)
}

/// Converts the policy's latent vector into concrete control codes through
/// the feasible sets, writing into `control`.
pub fn round_to_control_into(latent: &[f64], sets: &FeasibleSets, control: &mut Vec<usize>) {
    assert_eq!(latent.len(), sets.n_units(), "one latent component per unit");
    control.clear();
    for (unit, &value) in latent.iter().enumerate() {
        let list = sets.unit(unit);
        assert!(!list.is_empty(), "feasible list of unit {unit} is empty");
        control.push(list[latent_index(value, list.len())]);
    }
}

/// Allocating variant of [`round_to_control_into`].
pub fn round_to_control(latent: &[f64], sets: &FeasibleSets) -> Vec<usize> {
    let mut control = Vec::with_capacity(latent.len());
    round_to_control_into(latent, sets, &mut control);
    control
}

/// Penalty for allocating one task to several units in the same period:
/// kappa times the norm of the per-task excess counts. Idle codes are never
/// penalized.
pub fn double_allocation_penalty(
    control: &[usize],
    config: &PenaltyConfig,
    n_tasks: usize,
) -> f64 {
    let mut acc = 0.0;
    for (l, &code) in control.iter().enumerate() {
        if code == 0 || code > n_tasks {
            continue;
        }
        if control[..l].contains(&code) {
            continue;
        }
        let extra = control[l + 1..].iter().filter(|&&c| c == code).count();
        if extra > 0 {
            let g = extra as f64;
            acc += match config.norm {
                PenaltyNorm::L1 => g,
                PenaltyNorm::L2 => g * g,
            };
        }
    }
    match config.norm {
        PenaltyNorm::L1 => config.kappa_g * acc,
        PenaltyNorm::L2 => config.kappa_g * acc.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        self, DiscardEvents, EnvOptions, Scenario, UncertaintyConfig,
    };
    use crate::seeding;
    use rand::Rng;

    fn i1() -> ProblemInstance {
        ProblemInstance::builtin("instance1").unwrap()
    }

    fn deterministic(instance: &ProblemInstance) -> Scenario {
        let mut rng = seeding::rng(1);
        env::sample_scenario(instance, &UncertaintyConfig::default(), false, &mut rng)
    }

    #[test]
    fn fresh_unit_offers_all_eligible_tasks_plus_idle() {
        let instance = i1();
        let state = env::initial_state(&instance, &deterministic(&instance));
        let sets = feasible_sets(&state, &instance);
        assert_eq!(sets.unit(0), &[1, 3, 6, 9]);
        assert_eq!(sets.unit(1), &[4, 5, 6, 9]);
        assert_eq!(sets.unit(2), &[2, 3, 7, 9]);
        assert_eq!(sets.unit(3), &[5, 7, 8, 9]);
    }

    #[test]
    fn finished_predecessor_restricts_to_its_successors() {
        let instance = i1();
        let mut state = env::initial_state(&instance, &deterministic(&instance));
        state.finished[0] = true;
        state.last_task[0] = Some((0, 28));
        let sets = feasible_sets(&state, &instance);
        // Unit 1 after T1: successors {T6} intersect eligible {T1,T3,T6}.
        assert_eq!(sets.unit(0), &[6, 9]);
    }

    #[test]
    fn busy_unit_is_pinned_to_its_task() {
        let instance = i1();
        let scenario = deterministic(&instance);
        let mut state = env::initial_state(&instance, &scenario);
        env::step(
            &mut state,
            &[9, 4, 9, 9],
            &scenario,
            &instance,
            &EnvOptions::default(),
            &mut DiscardEvents,
        )
        .unwrap();
        let sets = feasible_sets(&state, &instance);
        assert_eq!(sets.unit(1), &[4]);
    }

    #[test]
    fn finished_tasks_leave_every_list() {
        let instance = i1();
        let mut state = env::initial_state(&instance, &deterministic(&instance));
        for task in 0..instance.n_tasks() {
            state.finished[task] = true;
        }
        let sets = feasible_sets(&state, &instance);
        for unit in 0..instance.n_units() {
            assert_eq!(sets.unit(unit), &[9], "only idle survives");
        }
    }

    #[test]
    fn latent_endpoints_and_midpoints_map_as_documented() {
        let list = vec![vec![1, 3, 6, 9]];
        let sets = FeasibleSets { per_unit: list };
        assert_eq!(round_to_control(&[0.0], &sets), vec![1]);
        assert_eq!(round_to_control(&[6.0], &sets), vec![9]);
        // 3.0 scales to 1.5, which rounds half away from zero to index 2.
        assert_eq!(round_to_control(&[3.0], &sets), vec![6]);
        let singleton = FeasibleSets { per_unit: vec![vec![4]] };
        assert_eq!(round_to_control(&[5.3], &singleton), vec![4]);
    }

    #[test]
    fn latent_sweep_reaches_every_list_element() {
        for k in 1..=9usize {
            let list: Vec<usize> = (1..=k).collect();
            let sets = FeasibleSets { per_unit: vec![list.clone()] };
            let mut hit = vec![false; k];
            let steps = if k == 1 { 1 } else { k };
            for j in 0..steps {
                let latent = if k == 1 { 0.0 } else { 6.0 * j as f64 / (k - 1) as f64 };
                let control = round_to_control(&[latent], &sets);
                let idx = list.iter().position(|&c| c == control[0]).unwrap();
                assert_eq!(idx, j, "grid point {j} of k={k}");
                hit[idx] = true;
            }
            assert!(hit.into_iter().all(|h| h));
        }
    }

    #[test]
    fn latent_index_is_monotone() {
        for k in 2..=9usize {
            let mut prev = 0;
            let mut latent = 0.0;
            while latent <= 6.0 {
                let idx = latent_index(latent, k);
                assert!(idx >= prev, "k={k}, latent={latent}");
                prev = idx;
                latent += 0.01;
            }
        }
    }

    #[test]
    fn penalty_prices_duplicate_allocations() {
        let config = PenaltyConfig::default();
        assert_eq!(double_allocation_penalty(&[1, 3, 9, 9], &config, 8), 0.0);
        assert_eq!(double_allocation_penalty(&[5, 5, 9, 9], &config, 8), 250.0);
        let two_pairs = double_allocation_penalty(&[5, 5, 7, 7], &config, 8);
        assert!((two_pairs - 250.0 * 2.0f64.sqrt()).abs() < 1e-12);
        // Three units on one task: excess 2.
        assert_eq!(double_allocation_penalty(&[5, 5, 5, 9], &config, 8), 500.0);
        let l1 = PenaltyConfig { norm: PenaltyNorm::L1, ..config };
        assert_eq!(double_allocation_penalty(&[5, 5, 7, 7], &l1, 8), 500.0);
    }

    #[test]
    fn penalty_is_zero_exactly_without_duplicates() {
        let config = PenaltyConfig::default();
        let mut rng = seeding::rng(17);
        for _ in 0..500 {
            let control: Vec<usize> = (0..4).map(|_| rng.random_range(1..=9)).collect();
            let mut counts = [0usize; 9];
            for &c in &control {
                if c <= 8 {
                    counts[c] += 1;
                }
            }
            let has_duplicate = counts.iter().any(|&n| n > 1);
            let penalty = double_allocation_penalty(&control, &config, 8);
            assert_eq!(penalty > 0.0, has_duplicate, "{control:?}");
            let expected = 250.0
                * counts
                    .iter()
                    .filter(|&&n| n > 1)
                    .map(|&n| ((n - 1) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
            assert!((penalty - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_controls_always_step_without_error() {
        let instance = ProblemInstance::builtin("instance2").unwrap();
        let config = UncertaintyConfig {
            processing_uncertain: true,
            due_uncertain: true,
            ..UncertaintyConfig::default()
        };
        let options = EnvOptions::default();
        for seed in 0..50u64 {
            let mut rng = seeding::rng(seed);
            let scenario = env::sample_scenario(&instance, &config, false, &mut rng);
            let mut state = env::initial_state(&instance, &scenario);
            let mut sets = FeasibleSets::with_units(instance.n_units());
            let mut control = Vec::new();
            loop {
                feasible_sets_into(&state, &instance, &mut sets);
                for unit in 0..instance.n_units() {
                    let list = sets.unit(unit);
                    assert!(!list.is_empty());
                    if !state.is_busy(unit) {
                        assert_eq!(*list.last().unwrap(), instance.idle_code());
                    }
                    assert!(list.windows(2).all(|w| w[0] < w[1]), "ascending order");
                }
                let latent: Vec<f64> = (0..instance.n_units())
                    .map(|_| rng.random_range(0.0..=6.0))
                    .collect();
                round_to_control_into(&latent, &sets, &mut control);
                let out = env::step(
                    &mut state,
                    &control,
                    &scenario,
                    &instance,
                    &options,
                    &mut DiscardEvents,
                )
                .expect("masked control must be accepted");
                if out.done {
                    break;
                }
            }
        }
    }
}
