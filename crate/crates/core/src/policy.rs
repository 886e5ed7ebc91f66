//! The recurrent scheduling policy: a small Elman network mapping the
//! normalized plant state to one latent decision value per unit, plus the
//! flat parameter codec and JSON persistence used by the optimizer.
//!
//! Architecture: input -> 10 linear nodes -> 4 recurrent tanh nodes -> 2
//! sigmoid nodes -> one output per unit, clamped to [0, 6]. The flat
//! parameter layout is layer-major with row-major weight matrices and the
//! recurrent matrix between a layer's input weights and its bias:
//! [W1, b1, W2, U2, b2, W3, b3, W4, b4].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::PlantState;
use crate::instance::ProblemInstance;

/// Errors from parameter handling, persistence and evaluation.
#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("parameter vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("parameter {index} is not finite")]
    NonFiniteParameter { index: usize },
    #[error("feature {index} is not finite")]
    NonFiniteFeature { index: usize },
    #[error("feature vector has length {got}, expected {expected}")]
    FeatureLength { expected: usize, got: usize },
    #[error("hidden state has length {got}, expected {expected}")]
    HiddenLength { expected: usize, got: usize },
    #[error("network dimensions must be positive")]
    ZeroDimension,
    #[error("policy file is malformed: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported policy schema_version {found}, expected 1")]
    SchemaVersion { found: u32 },
    #[error("cannot access policy file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Activation applied to the first hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum H1Activation {
    #[default]
    Identity,
    Tanh,
}

/// Network dimensions and the configurable first-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub h1: usize,
    pub h2: usize,
    pub h3: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub h1_activation: H1Activation,
}

impl NetworkSpec {
    /// Standard architecture for an instance: state-vector input, 10/4/2
    /// hidden nodes, one output per unit.
    pub fn for_instance(instance: &ProblemInstance) -> Self {
        Self {
            input_dim: instance.state_dim(),
            h1: 10,
            h2: 4,
            h3: 2,
            output_dim: instance.n_units(),
            h1_activation: H1Activation::Identity,
        }
    }

    /// Total number of parameters across all layers.
    pub fn param_count(&self) -> usize {
        self.h1 * self.input_dim
            + self.h1
            + self.h2 * self.h1
            + self.h2 * self.h2
            + self.h2
            + self.h3 * self.h2
            + self.h3
            + self.output_dim * self.h3
            + self.output_dim
    }

    fn validate(&self) -> Result<(), PolicyError> {
        if self.input_dim == 0
            || self.h1 == 0
            || self.h2 == 0
            || self.h3 == 0
            || self.output_dim == 0
        {
            return Err(PolicyError::ZeroDimension);
        }
        Ok(())
    }

    /// Flat-vector offsets of [W1, b1, W2, U2, b2, W3, b3, W4, b4].
    fn offsets(&self) -> [usize; 10] {
        let mut out = [0usize; 10];
        let sizes = [
            self.h1 * self.input_dim,
            self.h1,
            self.h2 * self.h1,
            self.h2 * self.h2,
            self.h2,
            self.h3 * self.h2,
            self.h3,
            self.output_dim * self.h3,
            self.output_dim,
        ];
        for (i, size) in sizes.into_iter().enumerate() {
            out[i + 1] = out[i] + size;
        }
        out
    }
}

/// Layered view of a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub u2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
    pub w4: Vec<f64>,
    pub b4: Vec<f64>,
}

impl Layers {
    /// Splits a flat vector into layers.
    pub fn decode(spec: &NetworkSpec, theta: &[f64]) -> Result<Self, PolicyError> {
        spec.validate()?;
        if theta.len() != spec.param_count() {
            return Err(PolicyError::LengthMismatch {
                expected: spec.param_count(),
                got: theta.len(),
            });
        }
        let o = spec.offsets();
        Ok(Self {
            w1: theta[o[0]..o[1]].to_vec(),
            b1: theta[o[1]..o[2]].to_vec(),
            w2: theta[o[2]..o[3]].to_vec(),
            u2: theta[o[3]..o[4]].to_vec(),
            b2: theta[o[4]..o[5]].to_vec(),
            w3: theta[o[5]..o[6]].to_vec(),
            b3: theta[o[6]..o[7]].to_vec(),
            w4: theta[o[7]..o[8]].to_vec(),
            b4: theta[o[8]..o[9]].to_vec(),
        })
    }

    /// Concatenates the layers back into a flat vector.
    pub fn encode(&self, spec: &NetworkSpec) -> Result<Vec<f64>, PolicyError> {
        spec.validate()?;
        let pieces: [(&[f64], usize); 9] = [
            (&self.w1, spec.h1 * spec.input_dim),
            (&self.b1, spec.h1),
            (&self.w2, spec.h2 * spec.h1),
            (&self.u2, spec.h2 * spec.h2),
            (&self.b2, spec.h2),
            (&self.w3, spec.h3 * spec.h2),
            (&self.b3, spec.h3),
            (&self.w4, spec.output_dim * spec.h3),
            (&self.b4, spec.output_dim),
        ];
        let mut theta = Vec::with_capacity(spec.param_count());
        for (piece, expected) in pieces {
            if piece.len() != expected {
                return Err(PolicyError::LengthMismatch { expected, got: piece.len() });
            }
            theta.extend_from_slice(piece);
        }
        Ok(theta)
    }
}

/// Validated flat parameters bound to their network spec.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    spec: NetworkSpec,
    theta: Vec<f64>,
}

/// On-disk policy document.
#[derive(Serialize, Deserialize)]
struct PolicyFile {
    schema_version: u32,
    spec: NetworkSpec,
    theta: Vec<f64>,
}

impl PolicyParams {
    /// Binds a flat vector to a spec, checking length and finiteness.
    pub fn new(spec: NetworkSpec, theta: Vec<f64>) -> Result<Self, PolicyError> {
        spec.validate()?;
        if theta.len() != spec.param_count() {
            return Err(PolicyError::LengthMismatch {
                expected: spec.param_count(),
                got: theta.len(),
            });
        }
        if let Some(index) = theta.iter().position(|v| !v.is_finite()) {
            return Err(PolicyError::NonFiniteParameter { index });
        }
        Ok(Self { spec, theta })
    }

    /// All-zero parameters (maps every state to the first feasible option).
    pub fn zeros(spec: NetworkSpec) -> Result<Self, PolicyError> {
        let count = spec.param_count();
        Self::new(spec, vec![0.0; count])
    }

    #[inline]
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    #[inline]
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Layered copy of the parameters.
    pub fn layers(&self) -> Layers {
        Layers::decode(&self.spec, &self.theta).expect("validated at construction")
    }

    /// Serializes to the versioned JSON document. serde_json emits the
    /// shortest decimal that round-trips each f64, so reloading is
    /// bit-exact.
    pub fn to_json_string(&self) -> String {
        let file = PolicyFile {
            schema_version: 1,
            spec: self.spec,
            theta: self.theta.clone(),
        };
        serde_json::to_string_pretty(&file).expect("policy document serializes")
    }

    /// Parses the versioned JSON document.
    pub fn from_json_str(text: &str) -> Result<Self, PolicyError> {
        let file: PolicyFile = serde_json::from_str(text)?;
        if file.schema_version != 1 {
            return Err(PolicyError::SchemaVersion { found: file.schema_version });
        }
        Self::new(file.spec, file.theta)
    }

    /// Writes the JSON document to a file.
    pub fn save(&self, path: &std::path::Path) -> Result<(), PolicyError> {
        std::fs::write(path, self.to_json_string()).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads the JSON document from a file.
    pub fn load(path: &std::path::Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

/// Recurrent context of the second hidden layer, one per running episode.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
}

impl HiddenState {
    /// Zero context sized for the spec.
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self { h: vec![0.0; spec.h2] }
    }

    /// Resets to zeros for a new episode.
    pub fn reset(&mut self) {
        self.h.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Reusable intermediate buffers for [`forward_into`].
#[derive(Debug, Clone)]
pub struct Scratch {
    a1: Vec<f64>,
    a2: Vec<f64>,
    a3: Vec<f64>,
}

impl Scratch {
    pub fn for_spec(spec: &NetworkSpec) -> Self {
        Self {
            a1: vec![0.0; spec.h1],
            a2: vec![0.0; spec.h2],
            a3: vec![0.0; spec.h3],
        }
    }
}

/// Writes the normalized feature vector of a state into `out`.
///
/// Inventories are scaled by order size, control codes by N+1, both
/// countdown blocks and the clock by the horizon; ordering matches the
/// observable state vector.
pub fn normalize_state_into(
    state: &PlantState,
    instance: &ProblemInstance,
    out: &mut Vec<f64>,
) {
    out.clear();
    let horizon = instance.horizon() as f64;
    let idle = instance.idle_code() as f64;
    for (task, &kg) in state.inventory_kg.iter().enumerate() {
        out.push(kg / instance.order_kg(task));
    }
    out.extend(state.last_control.iter().map(|&w| w as f64 / idle));
    out.extend(state.remaining_periods.iter().map(|&d| d as f64 / horizon));
    out.extend(state.slack_periods.iter().map(|&r| r as f64 / horizon));
    out.push(state.t as f64 / horizon);
}

/// Allocating variant of [`normalize_state_into`].
pub fn normalize_state(state: &PlantState, instance: &ProblemInstance) -> Vec<f64> {
    let mut out = Vec::with_capacity(instance.state_dim());
    normalize_state_into(state, instance, &mut out);
    out
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One forward pass: consumes the features and the previous hidden state,
/// updates the hidden state in place and writes one latent value in [0, 6]
/// per unit into `latent`.
pub fn forward_into(
    params: &PolicyParams,
    features: &[f64],
    hidden: &mut HiddenState,
    scratch: &mut Scratch,
    latent: &mut Vec<f64>,
) -> Result<(), PolicyError> {
    let spec = params.spec();
    if features.len() != spec.input_dim {
        return Err(PolicyError::FeatureLength { expected: spec.input_dim, got: features.len() });
    }
    if hidden.h.len() != spec.h2 {
        return Err(PolicyError::HiddenLength { expected: spec.h2, got: hidden.h.len() });
    }
    if let Some(index) = features.iter().position(|v| !v.is_finite()) {
        return Err(PolicyError::NonFiniteFeature { index });
    }
    let o = spec.offsets();
    let theta = &params.theta;
    let (w1, b1) = (&theta[o[0]..o[1]], &theta[o[1]..o[2]]);
    let (w2, u2, b2) = (&theta[o[2]..o[3]], &theta[o[3]..o[4]], &theta[o[4]..o[5]]);
    let (w3, b3) = (&theta[o[5]..o[6]], &theta[o[6]..o[7]]);
    let (w4, b4) = (&theta[o[7]..o[8]], &theta[o[8]..o[9]]);

    for i in 0..spec.h1 {
        let row = &w1[i * spec.input_dim..(i + 1) * spec.input_dim];
        let mut acc = b1[i];
        for (w, x) in row.iter().zip(features) {
            acc += w * x;
        }
        scratch.a1[i] = match spec.h1_activation {
            H1Activation::Identity => acc,
            H1Activation::Tanh => acc.tanh(),
        };
    }
    for i in 0..spec.h2 {
        let row = &w2[i * spec.h1..(i + 1) * spec.h1];
        let rec = &u2[i * spec.h2..(i + 1) * spec.h2];
        let mut acc = b2[i];
        for (w, x) in row.iter().zip(&scratch.a1) {
            acc += w * x;
        }
        for (u, h) in rec.iter().zip(&hidden.h) {
            acc += u * h;
        }
        scratch.a2[i] = acc.tanh();
    }
    hidden.h.copy_from_slice(&scratch.a2);
    for i in 0..spec.h3 {
        let row = &w3[i * spec.h2..(i + 1) * spec.h2];
        let mut acc = b3[i];
        for (w, x) in row.iter().zip(&scratch.a2) {
            acc += w * x;
        }
        scratch.a3[i] = sigmoid(acc);
    }
    latent.clear();
    for i in 0..spec.output_dim {
        let row = &w4[i * spec.h3..(i + 1) * spec.h3];
        let mut acc = b4[i];
        for (w, x) in row.iter().zip(&scratch.a3) {
            acc += w * x;
        }
        latent.push(acc.clamp(0.0, 6.0));
    }
    Ok(())
}

/// Allocating variant of [`forward_into`]: returns the latent vector and
/// the next hidden state.
pub fn forward(
    params: &PolicyParams,
    features: &[f64],
    hidden: &HiddenState,
) -> Result<(Vec<f64>, HiddenState), PolicyError> {
    let mut next = hidden.clone();
    let mut scratch = Scratch::for_spec(params.spec());
    let mut latent = Vec::with_capacity(params.spec().output_dim);
    forward_into(params, features, &mut next, &mut scratch, &mut latent)?;
    Ok((latent, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{self, UncertaintyConfig};
    use crate::seeding;
    use rand::Rng;

    fn spec_for(name: &str) -> NetworkSpec {
        NetworkSpec::for_instance(&ProblemInstance::builtin(name).unwrap())
    }

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            input_dim: 5,
            h1: 10,
            h2: 4,
            h3: 2,
            output_dim: 1,
            h1_activation: H1Activation::Identity,
        }
    }

    fn random_params(spec: NetworkSpec, seed: u64, scale: f64) -> PolicyParams {
        let mut rng = seeding::rng(seed);
        let theta: Vec<f64> =
            (0..spec.param_count()).map(|_| rng.random_range(-scale..scale)).collect();
        PolicyParams::new(spec, theta).unwrap()
    }

    #[test]
    fn parameter_counts_for_the_case_studies() {
        assert_eq!(spec_for("instance1").param_count(), 342);
        assert_eq!(spec_for("instance2").param_count(), 482);
        assert_eq!(tiny_spec().param_count(), 133);
    }

    #[test]
    fn zero_parameters_give_a_zero_latent_and_still_hidden_state() {
        let spec = spec_for("instance2");
        let params = PolicyParams::zeros(spec).unwrap();
        let features = vec![0.3; spec.input_dim];
        let hidden = HiddenState::zeros(&spec);
        let (latent, next) = forward(&params, &features, &hidden).unwrap();
        assert_eq!(latent, vec![0.0; 4]);
        assert_eq!(next.h, vec![0.0; 4]);
    }

    #[test]
    fn output_bias_pushes_into_the_upper_clamp() {
        let spec = spec_for("instance1");
        let mut theta = vec![0.0; spec.param_count()];
        let count = theta.len();
        for v in &mut theta[count - spec.output_dim..] {
            *v = 10.0;
        }
        let params = PolicyParams::new(spec, theta).unwrap();
        let (latent, _) =
            forward(&params, &vec![0.1; spec.input_dim], &HiddenState::zeros(&spec)).unwrap();
        assert_eq!(latent, vec![6.0; 4]);
    }

    #[test]
    fn latent_always_within_the_clamp_bounds() {
        let spec = tiny_spec();
        let mut rng = seeding::rng(99);
        let mut scratch = Scratch::for_spec(&spec);
        let mut latent = Vec::new();
        for _ in 0..10_000 {
            let theta: Vec<f64> =
                (0..spec.param_count()).map(|_| rng.random_range(-20.0..20.0)).collect();
            let params = PolicyParams::new(spec, theta).unwrap();
            let features: Vec<f64> =
                (0..spec.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut hidden = HiddenState::zeros(&spec);
            forward_into(&params, &features, &mut hidden, &mut scratch, &mut latent).unwrap();
            for &v in &latent {
                assert!((0.0..=6.0).contains(&v));
            }
        }
    }

    #[test]
    fn layer_codec_round_trips_and_orders_parameters() {
        let spec = tiny_spec();
        let params = random_params(spec, 5, 1.0);
        let layers = params.layers();
        let back = layers.encode(&spec).unwrap();
        assert_eq!(back, params.theta());
        // First flat entry is the first input weight of the first layer.
        assert_eq!(layers.w1[0], params.theta()[0]);
        let mut theta = params.theta().to_vec();
        theta[0] += 1.0;
        let perturbed = Layers::decode(&spec, &theta).unwrap();
        assert_eq!(perturbed.w1[0], layers.w1[0] + 1.0);
        assert_eq!(perturbed.b1, layers.b1);
        assert_eq!(perturbed.w2, layers.w2);
        assert_eq!(perturbed.u2, layers.u2);
        assert_eq!(perturbed.b2, layers.b2);
        assert_eq!(perturbed.w3, layers.w3);
        assert_eq!(perturbed.b3, layers.b3);
        assert_eq!(perturbed.w4, layers.w4);
        assert_eq!(perturbed.b4, layers.b4);
        assert_eq!(&perturbed.w1[1..], &layers.w1[1..]);
    }

    #[test]
    fn codec_rejects_wrong_lengths() {
        let spec = tiny_spec();
        assert!(matches!(
            Layers::decode(&spec, &vec![0.0; 10]),
            Err(PolicyError::LengthMismatch { expected: 133, got: 10 })
        ));
        let mut layers = PolicyParams::zeros(spec).unwrap().layers();
        layers.b4.push(0.0);
        assert!(matches!(layers.encode(&spec), Err(PolicyError::LengthMismatch { .. })));
        assert!(matches!(
            PolicyParams::new(spec, vec![0.0; 7]),
            Err(PolicyError::LengthMismatch { expected: 133, got: 7 })
        ));
        assert!(matches!(
            PolicyParams::new(spec, vec![f64::NAN; 133]),
            Err(PolicyError::NonFiniteParameter { index: 0 })
        ));
    }

    #[test]
    fn recurrence_replay_reproduces_latents() {
        let spec = spec_for("instance1");
        let params = random_params(spec, 11, 0.8);
        let mut rng = seeding::rng(12);
        let sequence: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..spec.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let run = |params: &PolicyParams| -> Vec<Vec<f64>> {
            let mut hidden = HiddenState::zeros(&spec);
            let mut scratch = Scratch::for_spec(&spec);
            let mut latent = Vec::new();
            sequence
                .iter()
                .map(|features| {
                    forward_into(params, features, &mut hidden, &mut scratch, &mut latent)
                        .unwrap();
                    latent.clone()
                })
                .collect()
        };
        assert_eq!(run(&params), run(&params));
    }

    /// Network whose output depends only on the recurrent context: the
    /// second layer feeds back on itself and the head stays strictly inside
    /// the clamp interval.
    fn recurrent_probe(spec: NetworkSpec) -> PolicyParams {
        let mut layers = PolicyParams::zeros(spec).unwrap().layers();
        layers.b2.iter_mut().for_each(|v| *v = 0.5);
        for i in 0..spec.h2 {
            layers.u2[i * spec.h2 + i] = 1.0;
        }
        layers.w3.iter_mut().for_each(|v| *v = 0.5);
        layers.w4.iter_mut().for_each(|v| *v = 1.0);
        layers.b4.iter_mut().for_each(|v| *v = 1.0);
        let theta = layers.encode(&spec).unwrap();
        PolicyParams::new(spec, theta).unwrap()
    }

    #[test]
    fn hidden_state_carries_information_between_steps() {
        let spec = tiny_spec();
        let params = recurrent_probe(spec);
        let features = vec![0.4; spec.input_dim];
        let mut hidden = HiddenState::zeros(&spec);
        let (first, _) = forward(&params, &features, &hidden).unwrap();
        let mut scratch = Scratch::for_spec(&spec);
        let mut latent = Vec::new();
        forward_into(&params, &features, &mut hidden, &mut scratch, &mut latent).unwrap();
        forward_into(&params, &features, &mut hidden, &mut scratch, &mut latent).unwrap();
        // Same features, different context: the latent should move.
        assert_ne!(first, latent);
        assert!(latent.iter().all(|&v| v > 0.0 && v < 6.0));
    }

    #[test]
    fn small_parameter_changes_move_the_latent_smoothly() {
        let spec = tiny_spec();
        let mut base_params = recurrent_probe(spec).layers();
        // Give the input path small weights so every index matters a bit.
        base_params.w1.iter_mut().for_each(|v| *v = 0.05);
        base_params.w2.iter_mut().for_each(|v| *v = 0.05);
        let params =
            PolicyParams::new(spec, base_params.encode(&spec).unwrap()).unwrap();
        let features = vec![0.2; spec.input_dim];
        let hidden = HiddenState::zeros(&spec);
        let (base, _) = forward(&params, &features, &hidden).unwrap();
        assert!(base.iter().all(|&v| v > 0.0 && v < 6.0), "test needs an unclamped point");
        let eps = 1e-6;
        for index in [0, 50, 132] {
            let mut theta = params.theta().to_vec();
            theta[index] += eps;
            let bumped = PolicyParams::new(spec, theta).unwrap();
            let (moved, _) = forward(&bumped, &features, &hidden).unwrap();
            for (a, b) in base.iter().zip(&moved) {
                let delta = (a - b).abs();
                assert!(delta > 0.0 || a == b, "index {index}");
                assert!(delta < 100.0 * eps, "index {index} jumped by {delta}");
            }
        }
    }

    #[test]
    fn normalization_scales_each_block() {
        let instance = ProblemInstance::builtin("instance2").unwrap();
        let mut rng = seeding::rng(2);
        let scenario =
            env::sample_scenario(&instance, &UncertaintyConfig::default(), false, &mut rng);
        let mut state = env::initial_state(&instance, &scenario);
        let features = normalize_state(&state, &instance);
        assert_eq!(features.len(), 39);
        assert!(features[..15].iter().all(|&f| f == 0.0), "no inventory yet");
        assert!(features[15..19].iter().all(|&f| f == 1.0), "all units idle");
        assert_eq!(&features[19..23], &[0.0, 0.03, 0.02, 0.03]);
        assert_eq!(features[23], instance.due_periods(0) as f64 / 200.0);
        assert_eq!(features[38], 0.0);

        state.inventory_kg[0] = 700.0;
        state.slack_periods[0] = -10;
        state.t = 50;
        let features = normalize_state(&state, &instance);
        assert_eq!(features[0], 1.0);
        assert_eq!(features[23], -0.05);
        assert_eq!(features[38], 0.25);
    }

    #[test]
    fn persistence_round_trips_bit_exactly() {
        let spec = spec_for("instance2");
        let params = random_params(spec, 41, 2.5);
        let text = params.to_json_string();
        let back = PolicyParams::from_json_str(&text).unwrap();
        assert_eq!(back.spec(), params.spec());
        assert_eq!(back.theta().len(), params.theta().len());
        for (a, b) in params.theta().iter().zip(back.theta()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let bad = text.replace("\"schema_version\": 1", "\"schema_version\": 3");
        assert!(matches!(
            PolicyParams::from_json_str(&bad),
            Err(PolicyError::SchemaVersion { found: 3 })
        ));
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let spec = tiny_spec();
        let params = PolicyParams::zeros(spec).unwrap();
        let hidden = HiddenState::zeros(&spec);
        assert!(matches!(
            forward(&params, &vec![0.0; 4], &hidden),
            Err(PolicyError::FeatureLength { expected: 5, got: 4 })
        ));
        assert!(matches!(
            forward(&params, &[0.0, f64::INFINITY, 0.0, 0.0, 0.0], &hidden),
            Err(PolicyError::NonFiniteFeature { index: 1 })
        ));
        let short = HiddenState { h: vec![0.0; 2] };
        assert!(matches!(
            forward(&params, &vec![0.0; 5], &short),
            Err(PolicyError::HiddenLength { expected: 4, got: 2 })
        ));
    }
}
