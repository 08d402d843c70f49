//! Physics-informed neural model: a feedforward network mapping demand to
//! bounded voltage predictions, a differentiable power-flow reconstruction
//! layer, the composite prediction + reconstruction loss, and training and
//! evaluation loops with a hand-rolled gradient engine that backpropagates
//! through the power-flow equations.

mod eval;
mod physics;
mod train;

pub use eval::{evaluate, write_predictions, write_predictions_to, EvalMetrics};
pub use physics::{gradients, loss_batch, loss_single, physics_forward, reconstruct, GradientSet, PhysicsForward};
pub use train::{train, TrainOutcome};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_model::Network;
use crate::powerflow::{DemandVector, VoltageProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Leaky ReLU with slope 0.01 on the negative side.
    LeakyRelu,
}

impl Activation {
    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    0.01 * z
                }
            }
        }
    }

    #[inline]
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.01
                }
            }
        }
    }
}

/// Architecture and output-bounding description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
    /// Per-output (min, max) pairs realized by the sigmoid output stage.
    pub output_bounds: Vec<(f64, f64)>,
}

impl ModelSpec {
    /// The standard spec for a network: inputs are the 2n demands, outputs the
    /// n magnitudes then n angles, bounded by each bus's boxes.
    pub fn for_network(net: &Network, hidden_layers: Vec<usize>, activation: Activation) -> Self {
        let n = net.n();
        let mut bounds = Vec::with_capacity(2 * n);
        for b in &net.buses {
            bounds.push((b.v_min, b.v_max));
        }
        for b in &net.buses {
            bounds.push((b.ang_min, b.ang_max));
        }
        ModelSpec {
            input_dim: 2 * n,
            hidden_layers,
            activation,
            output_dim: 2 * n,
            output_bounds: bounds,
        }
    }

    /// The default architecture used throughout: 512|256|128|64, LeakyReLU.
    pub fn default_for_network(net: &Network) -> Self {
        Self::for_network(net, vec![512, 256, 128, 64], Activation::LeakyRelu)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(ModelError::BadSpec("zero input or output dimension".into()));
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return Err(ModelError::BadSpec("hidden layer of width 0".into()));
        }
        if self.output_bounds.len() != self.output_dim {
            return Err(ModelError::BadSpec("output_bounds length != output_dim".into()));
        }
        for &(lo, hi) in &self.output_bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ModelError::BadSpec(format!("invalid output bound ({lo}, {hi})")));
            }
        }
        Ok(())
    }

    /// Total number of weights and biases.
    pub fn parameter_count(&self) -> usize {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_layers);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    BadSpec(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// One dense layer, weights stored (out × in).
#[derive(Debug, Clone)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Per-feature input standardization, stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fit mean/std per feature over rows; near-constant features get unit
    /// scale to avoid blow-ups.
    pub fn fit(rows: ArrayView2<'_, f64>) -> Self {
        let count = rows.nrows().max(1) as f64;
        let mean = rows.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(rows.ncols()));
        let mut var = Array1::<f64>::zeros(rows.ncols());
        for row in rows.rows() {
            for (j, &v) in row.iter().enumerate() {
                let d = v - mean[j];
                var[j] += d * d;
            }
        }
        let std = var
            .iter()
            .map(|&v| {
                let s = (v / count).sqrt();
                if s < 1e-8 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Normalization {
            mean: mean.to_vec(),
            std,
        }
    }
}

/// The trained artifact: layer parameters plus the spec, input normalization
/// and the seed it was initialized from.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
    pub normalization: Normalization,
    pub seed: u64,
}

/// Deterministic He-style uniform initialization: every weight drawn from
/// U[−√(6/fan_in), +√(6/fan_in)], biases zero. The same (spec, seed) pair
/// produces bit-identical models.
pub fn init_model(spec: &ModelSpec, seed: u64) -> Result<Model, ModelError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dims = vec![spec.input_dim];
    dims.extend(&spec.hidden_layers);
    dims.push(spec.output_dim);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let weights = Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(&mut rng));
        layers.push(Layer {
            w: weights,
            b: Array1::zeros(fan_out),
        });
    }
    Ok(Model {
        spec: spec.clone(),
        layers,
        normalization: Normalization::identity(spec.input_dim),
        seed,
    })
}

/// Numerically stable logistic function.
#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Forward activations cached for backpropagation.
pub(crate) struct ForwardCache {
    /// h[0] is the normalized input; h[l] the post-activation of layer l.
    pub h: Vec<Array2<f64>>,
    /// Pre-activations per layer; the last entry holds the output logits.
    pub z: Vec<Array2<f64>>,
    /// Bounded outputs.
    pub out: Array2<f64>,
}

impl Model {
    /// Flatten a demand vector into the input feature order [pd…, qd…].
    pub fn features(demand: &DemandVector) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * demand.len());
        x.extend_from_slice(&demand.pd);
        x.extend_from_slice(&demand.qd);
        x
    }

    pub(crate) fn forward_cached(&self, x: ArrayView2<'_, f64>) -> ForwardCache {
        let batch = x.nrows();
        let mut h0 = x.to_owned();
        for mut row in h0.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.normalization.mean[j]) / self.normalization.std[j];
            }
        }
        let mut h = vec![h0];
        let mut z = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut zl = matmul_nt(&h[l].view(), &layer.w.view());
            for mut row in zl.rows_mut() {
                row += &layer.b;
            }
            if l + 1 < self.layers.len() {
                let mut hl = zl.clone();
                hl.mapv_inplace(|v| self.spec.activation.apply(v));
                h.push(hl);
            }
            z.push(zl);
        }
        let logits = z.last().expect("at least one layer");
        let mut out = Array2::zeros((batch, self.spec.output_dim));
        for (mut orow, lrow) in out.rows_mut().into_iter().zip(logits.rows()) {
            for (k, (o, &zv)) in orow.iter_mut().zip(lrow.iter()).enumerate() {
                let (lo, hi) = self.spec.output_bounds[k];
                *o = lo + (hi - lo) * sigmoid(zv);
            }
        }
        ForwardCache { h, z, out }
    }

    /// Batched bounded forward pass; rows are input feature vectors.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward_cached(x).out
    }

    /// Single-sample forward returning a voltage profile (vm then va).
    pub fn forward(&self, demand: &DemandVector) -> VoltageProfile {
        let feats = Self::features(demand);
        let x = Array2::from_shape_vec((1, feats.len()), feats).expect("shape");
        let out = self.forward_batch(x.view());
        let n = self.spec.output_dim / 2;
        VoltageProfile {
            vm: out.row(0).iter().take(n).copied().collect(),
            va: out.row(0).iter().skip(n).copied().collect(),
        }
    }

    /// A stable checksum of all parameters, for determinism checks.
    pub fn parameter_checksum(&self) -> u64 {
        let mut acc: u64 = 0xcbf29ce484222325;
        let mut feed = |v: f64| {
            acc ^= v.to_bits();
            acc = acc.wrapping_mul(0x100000001b3);
        };
        for layer in &self.layers {
            layer.w.iter().copied().for_each(&mut feed);
            layer.b.iter().copied().for_each(&mut feed);
        }
        acc
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// C = A · Bᵀ with deterministic parallel row chunking.
pub(crate) fn matmul_nt(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Array2<f64> {
    use ndarray::linalg::general_mat_mul;
    use rayon::prelude::*;
    let mut c = Array2::zeros((a.nrows(), b.nrows()));
    let chunk = a.nrows().div_ceil(rayon::current_num_threads().max(1)).max(64);
    let bt = b.t();
    c.axis_chunks_iter_mut(Axis(0), chunk)
        .into_par_iter()
        .zip(a.axis_chunks_iter(Axis(0), chunk).into_par_iter())
        .for_each(|(mut c_chunk, a_chunk)| {
            general_mat_mul(1.0, &a_chunk, &bt, 0.0, &mut c_chunk);
        });
    c
}

/// C = A · B with deterministic parallel row chunking.
pub(crate) fn matmul_nn(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Array2<f64> {
    use ndarray::linalg::general_mat_mul;
    use rayon::prelude::*;
    let mut c = Array2::zeros((a.nrows(), b.ncols()));
    let chunk = a.nrows().div_ceil(rayon::current_num_threads().max(1)).max(64);
    c.axis_chunks_iter_mut(Axis(0), chunk)
        .into_par_iter()
        .zip(a.axis_chunks_iter(Axis(0), chunk).into_par_iter())
        .for_each(|(mut c_chunk, a_chunk)| {
            general_mat_mul(1.0, &a_chunk, b, 0.0, &mut c_chunk);
        });
    c
}

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss_mode: LossMode,
    pub seed: u64,
    /// Share of the training set held out for model selection (0 disables).
    pub validation_fraction: f64,
    /// Step decay: multiply the rate by `lr_decay_factor` every
    /// `lr_decay_every` epochs.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 512,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            loss_mode: LossMode::PhysicsInformed,
            seed: 0,
            validation_fraction: 0.1,
            lr_decay_every: 100,
            lr_decay_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e−8.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Full composite loss including the demand-reconstruction terms.
    PhysicsInformed,
    /// Label-matching terms only; reconstruction terms zeroed.
    SupervisedOnly,
}

/// Additive decomposition of the composite mean-square-error loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub v_mse: f64,
    pub phi_mse: f64,
    pub pg_mse: f64,
    pub qg_mse: f64,
    pub pd_recon_mse: f64,
    pub qd_recon_mse: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub(crate) fn scaled(&self, s: f64) -> LossBreakdown {
        LossBreakdown {
            v_mse: self.v_mse * s,
            phi_mse: self.phi_mse * s,
            pg_mse: self.pg_mse * s,
            qg_mse: self.qg_mse * s,
            pd_recon_mse: self.pd_recon_mse * s,
            qd_recon_mse: self.qd_recon_mse * s,
            total: self.total * s,
        }
    }

    pub(crate) fn add(&mut self, other: &LossBreakdown, weight: f64) {
        self.v_mse += other.v_mse * weight;
        self.phi_mse += other.phi_mse * weight;
        self.pg_mse += other.pg_mse * weight;
        self.qg_mse += other.qg_mse * weight;
        self.pd_recon_mse += other.pd_recon_mse * weight;
        self.qd_recon_mse += other.qd_recon_mse * weight;
        self.total += other.total * weight;
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

// ---- checkpoint serialization ----

#[derive(Serialize, Deserialize)]
struct LayerDump {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    seed: u64,
    spec: ModelSpec,
    normalization: Normalization,
    layers: Vec<LayerDump>,
}

/// Serialize a model to the versioned JSON checkpoint container. Round-trips
/// bit-exactly.
pub fn save_model(model: &Model, path: &std::path::Path) -> Result<(), ModelError> {
    let dump = Checkpoint {
        format: "gridflow-model".into(),
        version: 1,
        seed: model.seed,
        spec: model.spec.clone(),
        normalization: model.normalization.clone(),
        layers: model
            .layers
            .iter()
            .map(|l| LayerDump {
                rows: l.w.nrows(),
                cols: l.w.ncols(),
                w: l.w.iter().copied().collect(),
                b: l.b.to_vec(),
            })
            .collect(),
    };
    let text = serde_json::to_string(&dump).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| ModelError::Checkpoint(e.to_string()))
}

pub fn load_model(path: &std::path::Path) -> Result<Model, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let dump: Checkpoint =
        serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if dump.format != "gridflow-model" {
        return Err(ModelError::Checkpoint(format!("unknown container '{}'", dump.format)));
    }
    if dump.version != 1 {
        return Err(ModelError::Checkpoint(format!("unsupported version {}", dump.version)));
    }
    dump.spec.validate()?;
    let mut layers = Vec::with_capacity(dump.layers.len());
    for l in dump.layers {
        if l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
            return Err(ModelError::Checkpoint("layer shape mismatch".into()));
        }
        layers.push(Layer {
            w: Array2::from_shape_vec((l.rows, l.cols), l.w)
                .map_err(|e| ModelError::Checkpoint(e.to_string()))?,
            b: Array1::from_vec(l.b),
        });
    }
    let model = Model {
        spec: dump.spec,
        layers,
        normalization: dump.normalization,
        seed: dump.seed,
    };
    // shape consistency against the spec
    let mut dims = vec![model.spec.input_dim];
    dims.extend(&model.spec.hidden_layers);
    dims.push(model.spec.output_dim);
    if model.layers.len() + 1 != dims.len() {
        return Err(ModelError::Checkpoint("layer count does not match spec".into()));
    }
    for (l, w) in model.layers.iter().zip(dims.windows(2)) {
        if l.w.ncols() != w[0] || l.w.nrows() != w[1] {
            return Err(ModelError::Checkpoint("layer shape does not match spec".into()));
        }
    }
    Ok(model)
}
