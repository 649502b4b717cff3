//! Surrogate-gradient training of the LIF readout.
//!
//! The forward pass uses the hard threshold; the backward pass replaces its
//! derivative with the sigmoid surrogate and treats the soft reset as a
//! constant. Because the reset is detached, `∂V^t/∂ψ_jc` obeys the same leaky
//! recurrence as the membrane itself, so the weight gradient is
//! `Σ_t o^t_j · b^t_c` with `b^t = a^t + k_m b^{t+1}` and
//! `a^t_c = (∂L/∂fr_c) · G'(V^t_c) / T`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::graph::{normalize, propagate, PropagatedFeatures};
use crate::neuron::{forward, predict, FireMode, FiringRate, LifLayer, NeuronConfig, SpikeTrain, SparseSpikes};
use crate::rng::{stream, Purpose};

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `G(v) = 1 / (1 + exp(−α v))`.
pub fn surrogate_value(v: f64, alpha: f64) -> f64 {
    sigmoid(alpha * v)
}

/// `G'(v) = α G(v) (1 − G(v))`, with `1 − G(v)` evaluated as `G(−v)`.
pub fn surrogate_grad(v: f64, alpha: f64) -> f64 {
    let x = (alpha * v).abs();
    alpha * sigmoid(x) * sigmoid(-x)
}

/// Surrogate derivative of the fire function at membrane potential `v`,
/// centred on the threshold(s) of the configured fire mode.
pub fn fire_surrogate_grad(v: f64, config: &NeuronConfig) -> f64 {
    let positive = surrogate_grad(v - config.v_th, config.alpha);
    match config.fire_mode {
        FireMode::Binary => positive,
        FireMode::Ternary => positive + surrogate_grad(v - config.negative_threshold(), config.alpha),
    }
}

fn check_label(label: usize, n_classes: usize) -> Result<()> {
    if label >= n_classes {
        return Err(Error::LabelOutOfRange { label, n_classes });
    }
    Ok(())
}

/// Mean squared error between the rates and the one-hot target.
pub fn mse_loss(rates: &FiringRate, label: usize, n_classes: usize) -> Result<f64> {
    check_label(label, n_classes)?;
    if rates.rates.len() != n_classes {
        return Err(Error::DimensionMismatch {
            context: "loss rates",
            expected: n_classes,
            actual: rates.rates.len(),
        });
    }
    let sum: f64 = rates
        .rates
        .iter()
        .enumerate()
        .map(|(c, &r)| {
            let target = if c == label { 1.0 } else { 0.0 };
            (r - target).powi(2)
        })
        .sum();
    Ok(sum / n_classes as f64)
}

/// `∂ MSE / ∂ fr_c = 2 (fr_c − y_c) / C`.
pub fn mse_grad(rates: &FiringRate, label: usize) -> Vec<f64> {
    let n = rates.rates.len() as f64;
    rates
        .rates
        .iter()
        .enumerate()
        .map(|(c, &r)| {
            let target = if c == label { 1.0 } else { 0.0 };
            2.0 * (r - target) / n
        })
        .collect()
}

/// Backward signal `b^t_c` for every step, `T × C`.
fn backward_signal(config: &NeuronConfig, membrane: &[f64], loss_grad: &[f64], t_steps: usize) -> Vec<f64> {
    let c = loss_grad.len();
    let k_m = config.k_m();
    let inv_t = 1.0 / t_steps as f64;
    let mut signal = vec![0.0; t_steps * c];
    for t in (0..t_steps).rev() {
        for class in 0..c {
            let local = loss_grad[class] * inv_t * fire_surrogate_grad(membrane[t * c + class], config);
            let carried = if t + 1 < t_steps {
                k_m * signal[(t + 1) * c + class]
            } else {
                0.0
            };
            signal[t * c + class] = local + carried;
        }
    }
    signal
}

/// Adds the weight gradient of one node to `grad` (d × C), using the sparse
/// input spikes recorded during the forward pass.
pub fn accumulate_gradient(
    config: &NeuronConfig,
    input: &SparseSpikes,
    membrane: &[f64],
    loss_grad: &[f64],
    grad: &mut [f64],
) {
    let c = loss_grad.len();
    let t_steps = input.t_steps();
    let signal = backward_signal(config, membrane, loss_grad, t_steps);
    for t in 0..t_steps {
        let b = &signal[t * c..(t + 1) * c];
        for &j in input.step(t) {
            let row = &mut grad[j as usize * c..(j as usize + 1) * c];
            row.iter_mut().zip(b).for_each(|(g, &s)| *g += s);
        }
    }
}

/// Weight gradient `∂L/∂ψ` (d × C, row-major) by backpropagation through time.
///
/// `membrane_trace` holds the pre-reset potentials (`T × C`) recorded during
/// the forward pass; `fired_train` only contributes its shape, since the reset
/// pathway carries no gradient.
pub fn backward_through_time(
    layer: &LifLayer,
    spike_train: &SpikeTrain,
    fired_train: &SpikeTrain,
    membrane_trace: &[f64],
    loss_grad: &[f64],
) -> Result<Vec<f64>> {
    let (d, c) = (layer.dim(), layer.n_classes());
    let t_steps = spike_train.t_steps();
    let checks = [
        ("input spike train width", d, spike_train.dim()),
        ("output spike train width", c, fired_train.dim()),
        ("output spike train length", t_steps, fired_train.t_steps()),
        ("membrane trace length", t_steps * c, membrane_trace.len()),
        ("loss gradient length", c, loss_grad.len()),
    ];
    for (context, expected, actual) in checks {
        if expected != actual {
            return Err(Error::DimensionMismatch {
                context,
                expected,
                actual,
            });
        }
    }
    let signal = backward_signal(&layer.config, membrane_trace, loss_grad, t_steps);
    let mut grad = vec![0.0; d * c];
    for t in 0..t_steps {
        let b = &signal[t * c..(t + 1) * c];
        for (j, &o) in spike_train.step(t).iter().enumerate() {
            if o == 0 {
                continue;
            }
            let o = f64::from(o);
            grad[j * c..(j + 1) * c]
                .iter_mut()
                .zip(b)
                .for_each(|(g, &s)| *g += o * s);
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::default()),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sgd => f.write_str("sgd"),
            Self::Adam { .. } => f.write_str("adam"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains on the whole training set per step.
    pub batch_size: Option<usize>,
    pub t_steps: usize,
    pub l2_coeff: f64,
    pub clip_bound: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Weights start uniform in `±init_scale`.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: None,
            t_steps: 100,
            l2_coeff: 0.0,
            clip_bound: 1.0,
            seed: 42,
            optimizer: OptimizerKind::default(),
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidInput("batch size must be at least 1".into()));
        }
        if self.t_steps == 0 {
            return Err(Error::InvalidInput("time steps must be at least 1".into()));
        }
        if !(self.l2_coeff.is_finite() && self.l2_coeff >= 0.0) {
            return Err(Error::InvalidInput(format!("l2 must be non-negative, got {}", self.l2_coeff)));
        }
        if !(self.clip_bound > 0.0) {
            return Err(Error::InvalidInput(format!("clip bound must be positive, got {}", self.clip_bound)));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidInput(format!("init scale must be non-negative, got {}", self.init_scale)));
        }
        Ok(())
    }
}

/// Gradient step with L2 penalty and weight clipping.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    l2_coeff: f64,
    clip_bound: f64,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, n_params: usize) -> Self {
        Self {
            kind: cfg.optimizer,
            learning_rate: cfg.learning_rate,
            l2_coeff: cfg.l2_coeff,
            clip_bound: cfg.clip_bound,
            step: 0,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
        }
    }

    /// `ψ ← clamp(ψ − update(∇ + 2 λ_2 ψ), ±clip)`.
    pub fn step(&mut self, weights: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (w, &g) in weights.iter_mut().zip(grad) {
                    *w -= lr * (g + 2.0 * self.l2_coeff * *w);
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let bias1 = 1.0 - beta1.powi(self.step as i32);
                let bias2 = 1.0 - beta2.powi(self.step as i32);
                for (((w, &g), m), v) in weights
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    let g = g + 2.0 * self.l2_coeff * *w;
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *w -= lr * (*m / bias1) / ((*v / bias2).sqrt() + eps);
                }
            }
        }
        let clip = self.clip_bound;
        weights.iter_mut().for_each(|w| *w = w.clamp(-clip, clip));
    }
}

/// Accuracy, predictions and confusion counts over a node set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Classifies `nodes` with fresh encoder streams keyed by `(seed, node)`.
pub fn evaluate(
    layer: &LifLayer,
    h: &PropagatedFeatures,
    labels: &[usize],
    nodes: &[usize],
    t_steps: usize,
    seed: u64,
) -> Result<Evaluation> {
    let c = layer.n_classes();
    let predictions: Vec<usize> = nodes
        .par_iter()
        .map(|&node| {
            if node >= h.n_nodes() {
                return Err(Error::NodeOutOfRange {
                    index: node,
                    n_nodes: h.n_nodes(),
                });
            }
            let mut local = layer.clone();
            let mut rng = stream(seed, Purpose::EvalEncode, 0, node as u64);
            let out = forward(&mut local, h.row(node), t_steps, &mut rng, false)?;
            predict(&out.rates)
        })
        .collect::<Result<_>>()?;
    let mut confusion = vec![vec![0usize; c]; c];
    let mut correct = 0;
    for (&node, &pred) in nodes.iter().zip(&predictions) {
        let truth = labels[node];
        check_label(truth, c)?;
        confusion[truth][pred] += 1;
        if truth == pred {
            correct += 1;
        }
    }
    let accuracy = if nodes.is_empty() {
        0.0
    } else {
        correct as f64 / nodes.len() as f64
    };
    Ok(Evaluation {
        accuracy,
        predictions,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_layer: LifLayer,
    pub final_layer: LifLayer,
    pub test_acc: f64,
}

/// Forward + backward for one mini-batch; returns the summed loss and
/// summed gradient (node order fixed by `batch`).
fn batch_gradient(
    layer: &LifLayer,
    h: &PropagatedFeatures,
    labels: &[usize],
    batch: &[usize],
    t_steps: usize,
    seed: u64,
    epoch: usize,
) -> Result<(f64, Vec<f64>)> {
    let n_params = layer.weights().len();
    let per_node: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|&node| {
            let mut local = layer.clone();
            let mut rng = stream(seed, Purpose::TrainEncode, epoch as u64, node as u64);
            let out = forward(&mut local, h.row(node), t_steps, &mut rng, true)?;
            let label = labels[node];
            let loss = mse_loss(&out.rates, label, layer.n_classes())?;
            let loss_grad = mse_grad(&out.rates, label);
            let trace = out.trace.expect("recorded forward");
            let mut grad = vec![0.0; n_params];
            accumulate_gradient(&layer.config, &trace.input, &trace.membrane, &loss_grad, &mut grad);
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for (l, g) in per_node {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss, grad))
}

/// Trains from already-propagated features.
pub fn train_on_features(
    h: &PropagatedFeatures,
    labels: &[usize],
    n_classes: usize,
    split: &SplitSpec,
    cfg: &TrainConfig,
    neuron_cfg: &NeuronConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    neuron_cfg.validate()?;
    split.validate(h.n_nodes())?;
    if split.train_idx.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    for &node in split.train_idx.iter().chain(&split.val_idx).chain(&split.test_idx) {
        check_label(labels[node], n_classes)?;
    }

    let mut init_rng = stream(cfg.seed, Purpose::Init, 0, 0);
    let mut layer = LifLayer::random(h.dim(), n_classes, *neuron_cfg, cfg.init_scale, &mut init_rng);
    let mut optimizer = Optimizer::new(cfg, layer.weights().len());
    let batch_size = cfg.batch_size.unwrap_or(split.train_idx.len()).max(1);

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, LifLayer)> = None;
    let mut order = split.train_idx.clone();
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = stream(cfg.seed, Purpose::Custom(7), epoch as u64, 0);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let (loss, mut grad) = batch_gradient(&layer, h, labels, batch, cfg.t_steps, cfg.seed, epoch)?;
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            optimizer.step(layer.weights_mut(), &grad);
            epoch_loss += loss;
        }
        let loss = epoch_loss / order.len() as f64;
        if !loss.is_finite() || layer.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        let val_acc = if split.val_idx.is_empty() {
            0.0
        } else {
            evaluate(&layer, h, labels, &split.val_idx, cfg.t_steps, cfg.seed)?.accuracy
        };
        records.push(EpochRecord { epoch, loss, val_acc });
        if best.as_ref().is_none_or(|(_, acc, _)| val_acc > *acc) {
            best = Some((epoch, val_acc, layer.clone()));
        }
    }

    let (best_epoch, best_val_acc, best_layer) = best.unwrap_or((0, 0.0, layer.clone()));
    let test_acc = evaluate(&best_layer, h, labels, &split.test_idx, cfg.t_steps, cfg.seed)?.accuracy;
    Ok(TrainReport {
        epochs: records,
        best_epoch,
        best_val_acc,
        best_layer,
        final_layer: layer,
        test_acc,
    })
}

/// Propagates `H = S^k X` once, then trains on the split.
pub fn train(
    ds: &Dataset,
    split: &SplitSpec,
    cfg: &TrainConfig,
    neuron_cfg: &NeuronConfig,
    k: usize,
) -> Result<TrainReport> {
    let h = propagate(&normalize(&ds.graph), &ds.features, k)?;
    train_on_features(&h, &ds.labels, ds.n_classes, split, cfg, neuron_cfg)
}
