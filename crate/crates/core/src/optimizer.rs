//! Hybrid particle-swarm / simulated-annealing search with progressive
//! search-space reduction, used to maximize a sampled policy objective over
//! flat parameter vectors.
//!
//! The swarm update is the classic inertia form, annealing proposals run on
//! a fixed cadence at constant temperature, and every accepted candidate is
//! kept inside per-dimension bounds that contract toward the incumbent best.
//! All randomness flows through per-iteration seeds, so results are
//! identical for any worker count and a checkpointed run resumes bit-exact.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::RiskSummary;
use crate::seeding;

const SCHEMA_VERSION: u32 = 1;

/// Errors from configuration or checkpoint handling.
#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid swarm configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("unsupported checkpoint schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
}

/// Swarm hyperparameters. Defaults follow standard constriction practice
/// where the source material leaves a value open; every field can be
/// overridden from the command line and is echoed into run metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmConfig {
    /// Population size P.
    pub population: usize,
    /// Search iterations K after the initial evaluation.
    pub iterations: usize,
    /// Inertia weight.
    pub omega: f64,
    /// Personal-best acceleration.
    pub c1: f64,
    /// Neighborhood-best acceleration.
    pub c2: f64,
    /// Velocity cap as a fraction of the box width per dimension.
    pub c3: f64,
    /// Ring-neighborhood size (n_h = population gives global-best updates).
    pub n_h: usize,
    /// Initial lower bound, broadcast over all dimensions.
    pub theta_lb: f64,
    /// Initial upper bound, broadcast over all dimensions.
    pub theta_ub: f64,
    /// Space-reduction rate per trigger.
    pub alpha: f64,
    /// Annealing temperature (held constant).
    pub temperature: f64,
    /// Run annealing when iteration % sa_every == 0; 0 disables it.
    pub sa_every: usize,
    /// Contract bounds when iteration % ssr_every == 0; 0 disables it.
    pub ssr_every: usize,
    /// Annealing step size as a fraction of the box width.
    pub sa_step_scale: f64,
    /// Draw the two acceleration factors per dimension instead of per
    /// particle.
    pub per_dimension_r: bool,
    /// Reproduce the asymmetric space-reduction lower-bound update exactly
    /// as printed in its source, which widens the box downward.
    pub strict_printed_ssr: bool,
    /// Use the conventional Metropolis acceptance test instead of the
    /// printed rule (which inverts it, so larger temperatures accept less).
    pub conventional_metropolis: bool,
    /// Evaluate every candidate on one shared scenario seed instead of
    /// fresh per-candidate seeds.
    pub common_random_numbers: bool,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            population: 60,
            iterations: 150,
            omega: 0.729,
            c1: 1.494,
            c2: 1.494,
            c3: 0.2,
            n_h: 5,
            theta_lb: -5.0,
            theta_ub: 5.0,
            alpha: 0.05,
            temperature: 1e6,
            sa_every: 10,
            ssr_every: 25,
            sa_step_scale: 0.05,
            per_dimension_r: false,
            strict_printed_ssr: false,
            conventional_metropolis: false,
            common_random_numbers: false,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let fail = |m: &str| Err(OptimizerError::InvalidConfig(m.to_string()));
        if self.population == 0 {
            return fail("population must be positive");
        }
        if self.n_h == 0 || self.n_h > self.population {
            return fail("n_h must be in 1..=population");
        }
        if !(self.c3 > 0.0 && self.c3 <= 1.0) {
            return fail("c3 must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail("alpha must be in [0, 1]");
        }
        if !(self.theta_lb < self.theta_ub) {
            return fail("theta_lb must be strictly below theta_ub");
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return fail("temperature must be positive and finite");
        }
        if !(self.sa_step_scale >= 0.0) || !self.sa_step_scale.is_finite() {
            return fail("sa_step_scale must be non-negative and finite");
        }
        for (name, v) in [("omega", self.omega), ("c1", self.c1), ("c2", self.c2)] {
            if !v.is_finite() || v < 0.0 {
                return fail(&format!("{name} must be non-negative and finite"));
            }
        }
        Ok(())
    }
}

/// One scored candidate: the objective value to maximize plus the risk
/// summary of its evaluation samples when the objective produces one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: f64,
    pub summary: Option<RiskSummary>,
}

/// Best-policy metrics captured after each iteration's evaluations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    #[serde(with = "score_codec")]
    pub best_j: f64,
    pub summary: Option<RiskSummary>,
}

/// Full optimizer state, serializable as a resume checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwarmState {
    #[serde(default = "schema_default")]
    pub schema_version: u32,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    #[serde(with = "score_vec_codec")]
    pub current_scores: Vec<f64>,
    pub personal_best: Vec<Vec<f64>>,
    #[serde(with = "score_vec_codec")]
    pub personal_best_score: Vec<f64>,
    pub neighborhood_best: Vec<Vec<f64>>,
    pub global_best: Vec<f64>,
    #[serde(with = "score_codec")]
    pub global_best_score: f64,
    pub global_best_summary: Option<RiskSummary>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub iteration: usize,
    pub history: Vec<IterationRecord>,
}

fn schema_default() -> u32 {
    SCHEMA_VERSION
}

impl SwarmState {
    pub fn best_params(&self) -> &[f64] {
        &self.global_best
    }

    pub fn best_score(&self) -> f64 {
        self.global_best_score
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("swarm state serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, OptimizerError> {
        let state: Self =
            serde_json::from_str(text).map_err(|e| OptimizerError::Malformed(e.to_string()))?;
        if state.schema_version != SCHEMA_VERSION {
            return Err(OptimizerError::SchemaVersion(state.schema_version));
        }
        Ok(state)
    }
}

/// Serializes non-finite scores as nulls so checkpoints stay valid JSON.
mod score_codec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { s.serialize_some(v) } else { s.serialize_none() }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

mod score_vec_codec {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&if x.is_finite() { Some(*x) } else { None })?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|x| x.unwrap_or(f64::NEG_INFINITY))
            .collect())
    }
}

fn v_max(config: &SwarmConfig, lb: f64, ub: f64) -> f64 {
    config.c3 * (ub - lb)
}

/// Draws the starting swarm: positions uniform in the box, velocities from
/// the full-width rule clamped to the velocity cap.
pub fn init_population(
    config: &SwarmConfig,
    param_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SwarmState, OptimizerError> {
    config.validate()?;
    if param_count == 0 {
        return Err(OptimizerError::InvalidConfig("param_count must be positive".into()));
    }
    let p = config.population;
    let lb = vec![config.theta_lb; param_count];
    let ub = vec![config.theta_ub; param_count];
    let mut positions = Vec::with_capacity(p);
    let mut velocities = Vec::with_capacity(p);
    for _ in 0..p {
        let theta: Vec<f64> =
            (0..param_count).map(|_| rng.random_range(config.theta_lb..config.theta_ub)).collect();
        positions.push(theta);
    }
    for _ in 0..p {
        let v: Vec<f64> = (0..param_count)
            .map(|_| {
                let a: f64 = rng.random();
                let cap = v_max(config, config.theta_lb, config.theta_ub);
                ((2.0 * a - 1.0) * (config.theta_ub - config.theta_lb)).clamp(-cap, cap)
            })
            .collect();
        velocities.push(v);
    }
    Ok(SwarmState {
        schema_version: SCHEMA_VERSION,
        personal_best: positions.clone(),
        personal_best_score: vec![f64::NEG_INFINITY; p],
        neighborhood_best: positions.clone(),
        global_best: positions[0].clone(),
        global_best_score: f64::NEG_INFINITY,
        global_best_summary: None,
        current_scores: vec![f64::NEG_INFINITY; p],
        positions,
        velocities,
        lb,
        ub,
        iteration: 0,
        history: Vec::new(),
    })
}

fn velocity_update(
    v: f64,
    theta: f64,
    personal: f64,
    neighborhood: f64,
    omega: f64,
    c1: f64,
    c2: f64,
    r1: f64,
    r2: f64,
) -> f64 {
    omega * v + c1 * r1 * (personal - theta) + c2 * r2 * (neighborhood - theta)
}

/// Moves every particle one swarm step: inertia plus stochastic pulls
/// toward its personal and neighborhood bests, with the velocity capped and
/// the position clipped to the current bounds.
pub fn pso_step(state: &mut SwarmState, config: &SwarmConfig, rng: &mut ChaCha8Rng) {
    let dims = state.lb.len();
    for i in 0..config.population {
        let (r1s, r2s): (Vec<f64>, Vec<f64>) = if config.per_dimension_r {
            let a: Vec<f64> = (0..dims).map(|_| rng.random()).collect();
            let b: Vec<f64> = (0..dims).map(|_| rng.random()).collect();
            (a, b)
        } else {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            (vec![a; dims], vec![b; dims])
        };
        for d in 0..dims {
            let cap = v_max(config, state.lb[d], state.ub[d]);
            let v = velocity_update(
                state.velocities[i][d],
                state.positions[i][d],
                state.personal_best[i][d],
                state.neighborhood_best[i][d],
                config.omega,
                config.c1,
                config.c2,
                r1s[d],
                r2s[d],
            )
            .clamp(-cap, cap);
            state.velocities[i][d] = v;
            state.positions[i][d] = (state.positions[i][d] + v).clamp(state.lb[d], state.ub[d]);
        }
    }
}

fn sa_accepts(delta_e: f64, z_bar: f64, temperature: f64, conventional: bool) -> bool {
    if delta_e > 0.0 {
        return true;
    }
    let threshold = (delta_e / temperature).exp();
    if conventional { z_bar < threshold } else { z_bar >= threshold }
}

/// Runs one annealing sweep: perturb each particle inside the box, score
/// the proposals with the provided per-particle seeds, and accept each one
/// on improvement or by the temperature rule. Every proposal evaluation
/// still competes for the global best even when rejected as a move.
pub fn sa_step<F>(
    state: &mut SwarmState,
    objective: &F,
    config: &SwarmConfig,
    seeds: &[u64],
    rng: &mut ChaCha8Rng,
) where
    F: Fn(&[f64], u64) -> Result<Evaluation, String> + Sync,
{
    let dims = state.lb.len();
    let p = config.population;
    assert_eq!(seeds.len(), p, "one proposal seed per particle");
    let mut proposals = Vec::with_capacity(p);
    let mut z_bars = Vec::with_capacity(p);
    for i in 0..p {
        let theta: Vec<f64> = (0..dims)
            .map(|d| {
                let w: f64 = rng.random_range(-1.0..1.0);
                let step = w * config.sa_step_scale * (state.ub[d] - state.lb[d]);
                (state.positions[i][d] + step).clamp(state.lb[d], state.ub[d])
            })
            .collect();
        proposals.push(theta);
        z_bars.push(rng.random::<f64>());
    }
    let evaluations: Vec<Result<Evaluation, String>> = proposals
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(theta, &seed)| objective(theta, seed))
        .collect();
    for i in 0..p {
        let evaluation = match &evaluations[i] {
            Ok(e) if e.score.is_finite() => e,
            Ok(e) => {
                log::warn!("annealing proposal {i} scored non-finite ({}); rejected", e.score);
                continue;
            }
            Err(message) => {
                log::warn!("annealing proposal {i} failed ({message}); rejected");
                continue;
            }
        };
        if evaluation.score > state.global_best_score {
            state.global_best_score = evaluation.score;
            state.global_best = proposals[i].clone();
            state.global_best_summary = evaluation.summary.clone();
        }
        let delta_e = evaluation.score - state.current_scores[i];
        if sa_accepts(delta_e, z_bars[i], config.temperature, config.conventional_metropolis) {
            state.positions[i] = proposals[i].clone();
            state.current_scores[i] = evaluation.score;
            if evaluation.score > state.personal_best_score[i] {
                state.personal_best_score[i] = evaluation.score;
                state.personal_best[i] = state.positions[i].clone();
            }
        }
    }
    refresh_neighborhood_bests(state, config);
}

/// Contracts the per-dimension bounds toward the incumbent best and
/// re-clamps positions and velocities into the smaller box.
pub fn reduce_space(state: &mut SwarmState, config: &SwarmConfig) {
    if !state.global_best_score.is_finite() {
        return;
    }
    let dims = state.lb.len();
    for d in 0..dims {
        let best = state.global_best[d];
        state.lb[d] += if config.strict_printed_ssr {
            config.alpha * (state.lb[d] - best)
        } else {
            config.alpha * (best - state.lb[d])
        };
        state.ub[d] -= config.alpha * (state.ub[d] - best);
    }
    for i in 0..config.population {
        for d in 0..dims {
            let cap = v_max(config, state.lb[d], state.ub[d]);
            state.positions[i][d] = state.positions[i][d].clamp(state.lb[d], state.ub[d]);
            state.velocities[i][d] = state.velocities[i][d].clamp(-cap, cap);
        }
    }
}

fn refresh_neighborhood_bests(state: &mut SwarmState, config: &SwarmConfig) {
    let p = config.population;
    let half_below = (config.n_h - 1) / 2;
    for i in 0..p {
        let mut best = i;
        for offset in 0..config.n_h {
            let j = (i + p - half_below + offset) % p;
            if state.personal_best_score[j] > state.personal_best_score[best] {
                best = j;
            }
        }
        state.neighborhood_best[i] = state.personal_best[best].clone();
    }
}

fn eval_seeds(config: &SwarmConfig, base_seed: u64, purpose: u64, k: usize) -> Vec<u64> {
    (0..config.population)
        .map(|i| {
            if config.common_random_numbers {
                seeding::mix(base_seed, &[seeding::PURPOSE_EVAL])
            } else {
                seeding::mix(base_seed, &[purpose, k as u64, i as u64])
            }
        })
        .collect()
}

fn evaluate_population<F>(state: &mut SwarmState, objective: &F, config: &SwarmConfig, seeds: &[u64])
where
    F: Fn(&[f64], u64) -> Result<Evaluation, String> + Sync,
{
    let evaluations: Vec<Result<Evaluation, String>> = state
        .positions
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(theta, &seed)| objective(theta, seed))
        .collect();
    for (i, result) in evaluations.into_iter().enumerate() {
        let evaluation = match result {
            Ok(e) if e.score.is_finite() => e,
            Ok(e) => {
                log::warn!("particle {i} scored non-finite ({}); scored -inf", e.score);
                state.current_scores[i] = f64::NEG_INFINITY;
                continue;
            }
            Err(message) => {
                log::warn!("particle {i} evaluation failed ({message}); scored -inf");
                state.current_scores[i] = f64::NEG_INFINITY;
                continue;
            }
        };
        state.current_scores[i] = evaluation.score;
        if evaluation.score > state.personal_best_score[i] {
            state.personal_best_score[i] = evaluation.score;
            state.personal_best[i] = state.positions[i].clone();
        }
        if evaluation.score > state.global_best_score {
            state.global_best_score = evaluation.score;
            state.global_best = state.positions[i].clone();
            state.global_best_summary = evaluation.summary;
        }
    }
    refresh_neighborhood_bests(state, config);
}

fn record_history(state: &mut SwarmState, k: usize) {
    state.history.push(IterationRecord {
        iteration: k,
        best_j: state.global_best_score,
        summary: state.global_best_summary.clone(),
    });
}

fn run_iterations<F>(
    state: &mut SwarmState,
    objective: &F,
    config: &SwarmConfig,
    seed: u64,
    from_k: usize,
) where
    F: Fn(&[f64], u64) -> Result<Evaluation, String> + Sync,
{
    for k in from_k..=config.iterations {
        let mut rng = seeding::rng(seeding::mix(seed, &[seeding::PURPOSE_SWARM, k as u64]));
        if config.ssr_every > 0 && k % config.ssr_every == 0 {
            reduce_space(state, config);
        }
        if config.sa_every > 0 && k % config.sa_every == 0 {
            let seeds = eval_seeds(config, seed, seeding::PURPOSE_ANNEAL, k);
            sa_step(state, objective, config, &seeds, &mut rng);
        }
        pso_step(state, config, &mut rng);
        let seeds = eval_seeds(config, seed, seeding::PURPOSE_EVAL, k);
        evaluate_population(state, objective, config, &seeds);
        record_history(state, k);
        state.iteration = k;
    }
}

/// Runs the full search: initial evaluation plus `config.iterations` swarm
/// iterations. The returned state holds the best parameters ever evaluated
/// and one history row per evaluation pass (iterations + 1 rows).
pub fn optimize<F>(
    objective: &F,
    config: &SwarmConfig,
    param_count: usize,
    seed: u64,
) -> Result<SwarmState, OptimizerError>
where
    F: Fn(&[f64], u64) -> Result<Evaluation, String> + Sync,
{
    let mut rng = seeding::rng(seeding::mix(seed, &[seeding::PURPOSE_SWARM, 0]));
    let mut state = init_population(config, param_count, &mut rng)?;
    let seeds = eval_seeds(config, seed, seeding::PURPOSE_EVAL, 0);
    evaluate_population(&mut state, objective, config, &seeds);
    record_history(&mut state, 0);
    run_iterations(&mut state, objective, config, seed, 1);
    Ok(state)
}

/// Continues a checkpointed run until `config.iterations`, reproducing the
/// exact trajectory an uninterrupted run with the same seed would take.
pub fn resume<F>(
    mut state: SwarmState,
    objective: &F,
    config: &SwarmConfig,
    seed: u64,
) -> Result<SwarmState, OptimizerError>
where
    F: Fn(&[f64], u64) -> Result<Evaluation, String> + Sync,
{
    config.validate()?;
    if state.positions.len() != config.population {
        return Err(OptimizerError::Malformed(format!(
            "checkpoint population {} does not match configured {}",
            state.positions.len(),
            config.population
        )));
    }
    let from = state.iteration + 1;
    run_iterations(&mut state, objective, config, seed, from);
    Ok(state)
}

/// Writes the per-iteration best-policy metrics as CSV. Rows without a risk
/// summary (objectives that do not produce one) leave those cells empty.
pub fn write_history_csv<W: std::io::Write>(
    history: &[IterationRecord],
    writer: &mut W,
) -> std::io::Result<()> {
    writeln!(writer, "iteration,best_J,mean,std,var_beta,cvar_beta,f_lb")?;
    for row in history {
        match &row.summary {
            Some(s) => writeln!(
                writer,
                "{},{},{},{},{},{},{}",
                row.iteration, row.best_j, s.mean, s.std, s.var_beta, s.cvar_beta, s.f_lb
            )?,
            None => writeln!(writer, "{},{},,,,,", row.iteration, row.best_j)?,
        }
    }
    Ok(())
}
