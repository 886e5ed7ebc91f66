//! Release gate: one test per shipping criterion. Each prints a single
//! `criterion N (...): PASS/FAIL` verdict line with the measured numbers
//! (shown under `--nocapture`, or automatically when a criterion fails)
//! and then asserts it.
//!
//! The policy-training criteria run real searches, so the whole target
//! takes several minutes on one core.

use std::path::{Path, PathBuf};
use std::process::Command;

use batchplant::env::{self, DiscardEvents, EnvOptions, UncertaintyConfig};
use batchplant::harness::{self, ExperimentConfig};
use batchplant::instance::ProblemInstance;
use batchplant::optimizer::{self, Evaluation, SwarmConfig, SwarmState};
use batchplant::policy::{NetworkSpec, PolicyParams};
use batchplant::risk;
use batchplant::seeding;
use rand::Rng;

fn verdict(number: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number} ({name}): {tag}: {detail}");
    assert!(pass, "criterion {number} ({name}): {detail}");
}

/// Trains one policy under an experiment preset and returns it together
/// with the final search state.
fn train_best(config: &ExperimentConfig, swarm: &SwarmConfig, seed: u64) -> (PolicyParams, SwarmState) {
    let instance = config.load_instance().expect("preset instance loads");
    let spec = NetworkSpec::for_instance(&instance);
    let objective = harness::training_objective(config, &instance, &spec);
    let state =
        optimizer::optimize(&objective, swarm, spec.param_count(), seed).expect("search completes");
    let params = PolicyParams::new(spec, state.best_params().to_vec()).expect("dimensions agree");
    (params, state)
}

fn best_of_five(id: &str, instance: &str) -> f64 {
    let config = ExperimentConfig::preset(id, instance).unwrap();
    (0..5)
        .map(|seed| train_best(&config, &harness::preset_swarm(), seed).1.best_score())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_1_deterministic_optimality_instance1() {
    let mut pass = true;
    let mut lines = Vec::new();
    for (id, floor) in [("E1", -65.1), ("E2", -68.25)] {
        let best = best_of_five(id, "instance1");
        pass &= best >= floor;
        lines.push(format!("{id} best-of-5 J = {best:.2} (needs >= {floor})"));
    }
    verdict(1, "deterministic optimality, instance 1", pass, &lines.join("; "));
}

#[test]
fn criterion_2_deterministic_optimality_instance2() {
    let mut pass = true;
    let mut lines = Vec::new();
    for (id, floor) in [("E1", -112.35), ("E2", -150.7)] {
        let best = best_of_five(id, "instance2");
        pass &= best >= floor;
        lines.push(format!("{id} best-of-5 J = {best:.2} (needs >= {floor})"));
    }
    verdict(2, "deterministic optimality, instance 2", pass, &lines.join("; "));
}

#[test]
fn criterion_3_schedule_feasibility() {
    let config = ExperimentConfig::preset("E8", "instance1").unwrap();
    let instance = config.load_instance().unwrap();
    let (params, _) = train_best(&config, &harness::preset_swarm(), 0);
    let report = harness::validate_policy(&params, &instance, &config, 500, 0).unwrap();
    let pass = report.schedule_violations.is_empty() && report.summary.f_lb >= 0.95;
    verdict(
        3,
        "schedule feasibility over 500 episodes",
        pass,
        &format!(
            "audit violations = {}, F_LB = {:.4} (needs 0 and >= 0.95)",
            report.schedule_violations.len(),
            report.summary.f_lb
        ),
    );
}

/// Tail-mean evaluation written independently of the library estimator:
/// sort a copy, take the max(1, floor(beta n))-th ascending sample as the
/// threshold, then average the shortfall below it.
fn brute_force_cvar(samples: &[f64], beta: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let k = ((beta * n as f64).floor() as usize).clamp(1, n);
    let threshold = sorted[k - 1];
    let shortfall: f64 = sorted.iter().map(|&z| (z - threshold).min(0.0)).sum();
    threshold + shortfall / (beta * n as f64)
}

/// Frozen confidence-bound oracle, computed with 50-digit arithmetic from
/// the incomplete-beta characterization of the binomial tail.
const CONFIDENCE_BOUND_ORACLE: &[(u64, u64, f64, f64)] = &[
    (499, 500, 0.05, 0.99928881815526885358),
    (495, 500, 0.05, 0.99476143594261981013),
    (450, 500, 0.05, 0.9194649593070618973),
    (250, 500, 0.05, 0.53571621721632730533),
    (1, 500, 0.05, 0.0059735515163495596719),
    (9, 10, 0.05, 0.96322856211253491536),
    (5, 10, 0.1, 0.64578407112739079547),
    (480, 500, 0.01, 0.97615335052201622153),
    (500, 500, 0.05, 0.99989741867304906479),
    (0, 500, 0.05, 0.0),
    (50, 50, 0.05, 0.99897466013276793641),
];

#[test]
fn criterion_4_estimator_oracles() {
    let mut rng = seeding::rng(20260822);
    let mut worst_cvar = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=400);
        let beta = loop {
            let b: f64 = rng.random_range(0.02..0.98);
            let scaled = b * n as f64;
            if (scaled - scaled.round()).abs() > 1e-6 {
                break b;
            }
        };
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let got = risk::cvar_estimate(&z, beta).unwrap();
        worst_cvar = worst_cvar.max((got - brute_force_cvar(&z, beta)).abs());
    }

    let mut worst_mean = 0.0f64;
    let mut worst_affine = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=100);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = z.iter().sum::<f64>() / n as f64;
        worst_mean = worst_mean.max((risk::cvar_estimate(&z, 1.0).unwrap() - mean).abs());

        let beta: f64 = rng.random_range(0.05..1.0);
        let a: f64 = rng.random_range(0.5..2.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let moved: Vec<f64> = z.iter().map(|&v| a * v + b).collect();
        let direct = risk::cvar_estimate(&moved, beta).unwrap();
        let derived = a * risk::cvar_estimate(&z, beta).unwrap() + b;
        worst_affine = worst_affine.max((direct - derived).abs());
    }

    let mut worst_closed = 0.0f64;
    for n in [1u64, 10, 50, 100, 500, 10_000] {
        for upsilon in [0.01, 0.05, 0.1] {
            let got = risk::clopper_pearson_lb(n, n, upsilon).unwrap();
            let closed = ((1.0 - upsilon).ln() / n as f64).exp();
            worst_closed = worst_closed.max((got - closed).abs());
        }
    }

    let mut worst_table = 0.0f64;
    for &(s, n, upsilon, expected) in CONFIDENCE_BOUND_ORACLE {
        let got = risk::clopper_pearson_lb(s, n, upsilon).unwrap();
        worst_table = worst_table.max((got - expected).abs());
    }

    let pass = worst_cvar <= 1e-12
        && worst_mean <= 1e-12
        && worst_affine <= 1e-12
        && worst_closed <= 1e-10
        && worst_table <= 1e-9;
    verdict(
        4,
        "risk estimator oracles",
        pass,
        &format!(
            "cvar vs brute force {worst_cvar:.2e}, beta=1 vs mean {worst_mean:.2e}, \
             affine {worst_affine:.2e}, zero-failure closed form {worst_closed:.2e}, \
             beta-table {worst_table:.2e}"
        ),
    );
}

fn sphere(theta: &[f64], _seed: u64) -> Result<Evaluation, String> {
    Ok(Evaluation { score: -theta.iter().map(|x| x * x).sum::<f64>(), summary: None })
}

fn search_invariants(state: &SwarmState, config: &SwarmConfig) -> Result<(), String> {
    for pair in state.history.windows(2) {
        if pair[1].best_j < pair[0].best_j {
            return Err(format!("best J fell from {} to {}", pair[0].best_j, pair[1].best_j));
        }
    }
    for d in 0..state.lb.len() {
        if state.lb[d] < config.theta_lb || state.ub[d] > config.theta_ub || state.lb[d] > state.ub[d] {
            return Err(format!(
                "bounds [{}, {}] in dimension {d} left the initial box",
                state.lb[d], state.ub[d]
            ));
        }
    }
    Ok(())
}

#[test]
fn criterion_5_optimizer_sanity_on_the_sphere() {
    let cases = [
        (2, 1e-2, SwarmConfig { population: 20, iterations: 60, n_h: 20, ..SwarmConfig::default() }),
        (
            50,
            1.0,
            SwarmConfig {
                population: 60,
                iterations: 300,
                n_h: 60,
                ssr_every: 10,
                ..SwarmConfig::default()
            },
        ),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (dims, tolerance, config) in &cases {
        let mut worst_gap = 0.0f64;
        for seed in 0..5 {
            let state = optimizer::optimize(&sphere, config, *dims, seed).unwrap();
            worst_gap = worst_gap.max(-state.best_score());
            if let Err(message) = search_invariants(&state, config) {
                pass = false;
                lines.push(format!("{dims}-D seed {seed}: {message}"));
            }
        }
        pass &= worst_gap <= *tolerance;
        lines.push(format!("{dims}-D worst gap {worst_gap:.2e} (needs <= {tolerance})"));
    }

    let once = optimizer::optimize(&sphere, &cases[0].2, 2, 0).unwrap();
    let again = optimizer::optimize(&sphere, &cases[0].2, 2, 0).unwrap();
    let deterministic =
        once.best_score() == again.best_score() && once.best_params() == again.best_params();
    pass &= deterministic;
    lines.push(format!("repeat run identical = {deterministic}"));

    verdict(5, "optimizer sphere benchmark", pass, &lines.join("; "));
}

/// Two campaigns of two periods each on one unit. The first order is due
/// at period 2, the second at period 6, and switching 1 -> 2 costs one
/// cleaning period.
const MICRO_JSON: &str = r#"{
  "schema_version": 1,
  "dt_days": 0.5,
  "horizon_periods": 12,
  "tasks": [
    {"id": 1, "order_size_kg": 200.0, "due_date_days": 1.0, "release_days": 0.0, "successors": [2]},
    {"id": 2, "order_size_kg": 100.0, "due_date_days": 3.0, "release_days": 0.0, "successors": [1]}
  ],
  "units": [
    {"id": 1, "release_days": 0.0, "eligible": [
      {"task": 1, "batch_kg": 100.0, "proc_days": 0.5},
      {"task": 2, "batch_kg": 100.0, "proc_days": 1.0}
    ]}
  ],
  "cleaning": [
    {"from": 1, "to": 2, "days": 0.5}
  ]
}"#;

const MICRO_HORIZON: i64 = 12;
const MICRO_DUE: [i64; 2] = [2, 6];
const MICRO_BUSY: i64 = 2;

fn micro_cleaning(prev: usize, next: usize) -> i64 {
    if prev == 0 && next == 1 { 1 } else { 0 }
}

struct MicroTrajectory {
    controls: Vec<usize>,
    model_return: f64,
}

fn micro_horizon_return(comp: &[Option<i64>; 2]) -> f64 {
    let mut score = -MICRO_HORIZON;
    for task in 0..2 {
        score += match comp[task] {
            Some(done_at) => (MICRO_DUE[task] - done_at).min(0),
            None => MICRO_DUE[task] - MICRO_HORIZON,
        };
    }
    score as f64
}

/// Walks every control sequence of the micro plant: at each period with a
/// free unit the choice is to idle or to start one of the open campaigns.
/// Each complete branch records the full control stream and the return
/// predicted by a direct timing model that shares no code with the
/// simulator under test.
fn enumerate_micro(
    t: i64,
    last: Option<(usize, i64)>,
    comp: [Option<i64>; 2],
    controls: &mut Vec<usize>,
    out: &mut Vec<MicroTrajectory>,
) {
    if let (Some(first), Some(second)) = (comp[0], comp[1]) {
        let makespan = first.max(second);
        let tardiness: i64 = (0..2).map(|i| (comp[i].unwrap() - MICRO_DUE[i]).max(0)).sum();
        out.push(MicroTrajectory {
            controls: controls.clone(),
            model_return: -(tardiness + makespan) as f64,
        });
        return;
    }
    if t >= MICRO_HORIZON {
        out.push(MicroTrajectory { controls: controls.clone(), model_return: micro_horizon_return(&comp) });
        return;
    }

    controls.push(3);
    enumerate_micro(t + 1, last, comp, controls, out);
    controls.pop();

    for task in 0..2 {
        if comp[task].is_some() {
            continue;
        }
        let setup = match last {
            Some((prev, freed_at)) => (micro_cleaning(prev, task) + freed_at - t).max(0),
            None => 0,
        };
        let end = t + setup + MICRO_BUSY;
        let busy = (end.min(MICRO_HORIZON) - t) as usize;
        controls.extend(std::iter::repeat(task + 1).take(busy));
        if end <= MICRO_HORIZON {
            let mut next = comp;
            next[task] = Some(end);
            enumerate_micro(end, Some((task, end)), next, controls, out);
        } else {
            out.push(MicroTrajectory {
                controls: controls.clone(),
                model_return: micro_horizon_return(&comp),
            });
        }
        controls.truncate(controls.len() - busy);
    }
}

fn replay_micro(instance: &ProblemInstance, controls: &[usize]) -> (f64, usize) {
    let mut rng = seeding::rng(1);
    let scenario = env::sample_scenario(instance, &UncertaintyConfig::default(), false, &mut rng);
    let mut state = env::initial_state(instance, &scenario);
    let options = EnvOptions::default();
    let mut total = 0.0;
    let mut steps = 0;
    for &code in controls {
        let outcome = env::step(&mut state, &[code], &scenario, instance, &options, &mut DiscardEvents)
            .expect("enumerated controls stay legal");
        total += outcome.reward;
        steps += 1;
        if outcome.done {
            break;
        }
    }
    (total, steps)
}

#[test]
fn criterion_6_dynamics_oracle() {
    let instance = ProblemInstance::from_json_str("micro", MICRO_JSON).unwrap();
    let mut trajectories = Vec::new();
    enumerate_micro(0, None, [None, None], &mut Vec::new(), &mut trajectories);

    let mut mismatches = 0usize;
    for trajectory in &trajectories {
        let (simulated, steps) = replay_micro(&instance, &trajectory.controls);
        if steps != trajectory.controls.len() || (simulated - trajectory.model_return).abs() > 1e-9 {
            mismatches += 1;
        }
    }

    let optimum = trajectories.iter().map(|t| t.model_return).fold(f64::NEG_INFINITY, f64::max);
    let by_controls = |want: &[usize]| {
        trajectories
            .iter()
            .find(|t| t.controls == want)
            .map(|t| t.model_return)
            .expect("enumeration covers the hand schedule")
    };
    let first_then_second = by_controls(&[1, 1, 2, 2, 2]);
    let second_then_first = by_controls(&[2, 2, 1, 1]);

    let pass = mismatches == 0
        && trajectories.len() > 100
        && optimum == -5.0
        && first_then_second == -5.0
        && second_then_first == -6.0;
    verdict(
        6,
        "exhaustive dynamics oracle",
        pass,
        &format!(
            "{} trajectories, {} disagree with the simulator, optimum {} (expected -5), \
             order (1,2) {}, order (2,1) {}",
            trajectories.len(),
            mismatches,
            optimum,
            first_then_second,
            second_then_first
        ),
    );
}

const PAIRED_SAMPLES: usize = 50;
const PAIRED_CRN: bool = false;

#[test]
fn criterion_7_distributional_improvement() {
    let mut mean_cfg = ExperimentConfig::preset("E8", "instance1").unwrap();
    let mut tail_cfg = ExperimentConfig::preset("D8", "instance1").unwrap();
    mean_cfg.training_samples = PAIRED_SAMPLES;
    tail_cfg.training_samples = PAIRED_SAMPLES;
    let swarm = SwarmConfig { common_random_numbers: PAIRED_CRN, ..harness::preset_swarm() };
    let instance = mean_cfg.load_instance().unwrap();

    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let (mean_policy, _) = train_best(&mean_cfg, &swarm, seed);
        let (tail_policy, _) = train_best(&tail_cfg, &swarm, seed);
        let mean_report = harness::validate_policy(&mean_policy, &instance, &mean_cfg, 500, seed).unwrap();
        let tail_report = harness::validate_policy(&tail_policy, &instance, &tail_cfg, 500, seed).unwrap();
        let mean_cvar = mean_report.summary.cvar_beta;
        let tail_cvar = tail_report.summary.cvar_beta;
        let win = tail_cvar >= mean_cvar;
        wins += win as u32;
        lines.push(format!("seed {seed}: E8 {mean_cvar:.2} vs D8 {tail_cvar:.2}{}", if win { " +" } else { "" }));
    }

    verdict(
        7,
        "tail objective improves validation CVaR",
        wins >= 4,
        &format!("{wins}/5 paired wins; {}", lines.join("; ")),
    );
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_batchplant")).args(args).output().expect("binary spawns")
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bp-acc-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn metrics_bytes(dir: &Path) -> Vec<u8> {
    std::fs::read(dir.join("metrics.json")).expect("metrics.json written")
}

#[test]
fn criterion_8_cli_byte_determinism() {
    let base = fresh_dir("determinism");
    let train_out = |label: &str, workers: &str| {
        let dir = base.join(label);
        let out = run_cli(&[
            "train", "--experiment", "E8", "--seed", "5", "--out", dir.to_str().unwrap(),
            "--pop", "8", "--iters", "4", "--samples", "12", "--mc", "40", "--workers", workers,
        ]);
        assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
        dir
    };
    let serial = train_out("serial", "1");
    let parallel = train_out("parallel", "2");
    let repeat = train_out("repeat", "1");

    let train_stable = metrics_bytes(&serial) == metrics_bytes(&parallel)
        && metrics_bytes(&serial) == metrics_bytes(&repeat);

    let policy = serial.join("policy.json");
    let validate_out = |label: &str, workers: &str| {
        let dir = base.join(label);
        let out = run_cli(&[
            "validate", "--policy", policy.to_str().unwrap(), "--experiment", "E8",
            "--seed", "11", "--mc", "60", "--out", dir.to_str().unwrap(), "--workers", workers,
        ]);
        assert!(out.status.success(), "validate failed: {}", String::from_utf8_lossy(&out.stderr));
        dir
    };
    let validate_serial = validate_out("validate-serial", "1");
    let validate_parallel = validate_out("validate-parallel", "2");
    let validate_stable = metrics_bytes(&validate_serial) == metrics_bytes(&validate_parallel);

    verdict(
        8,
        "byte-identical metrics.json",
        train_stable && validate_stable,
        &format!("train stable = {train_stable}, validate stable = {validate_stable}"),
    );
}

#[test]
fn criterion_9_decision_latency() {
    let config = ExperimentConfig::preset("E8", "instance2").unwrap();
    let instance = config.load_instance().unwrap();
    let spec = NetworkSpec::for_instance(&instance);
    let params = PolicyParams::zeros(spec).unwrap();
    let stats =
        harness::measure_decision_latency(&params, &instance, &config.uncertainty_config(), 10_000, 7)
            .unwrap();
    let pass = stats.p95_seconds < 1e-3;
    verdict(
        9,
        "per-decision latency",
        pass,
        &format!(
            "p95 = {:.1} us, mean = {:.1} us, max = {:.1} us over {} decisions (needs p95 < 1000 us)",
            stats.p95_seconds * 1e6,
            stats.mean_seconds * 1e6,
            stats.max_seconds * 1e6,
            stats.n_samples
        ),
    );
}
