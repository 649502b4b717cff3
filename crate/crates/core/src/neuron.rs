//! Bernoulli rate coding and the leaky integrate-and-fire readout layer.
//!
//! One simulation step for a node is: draw input spikes `o_j ~ Bernoulli(λ_j)`,
//! charge `V_c ← k_m V_c + Σ_j ψ_jc o_j`, fire where `V_c` crosses a threshold,
//! then soft-reset the neurons that fired. Firing rates over `T` steps are the
//! class scores.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FireMode {
    /// Spike 1 at `V ≥ v_th`.
    #[default]
    Binary,
    /// Additionally spike −1 at `V ≤ −v_th / θ`.
    Ternary,
}

impl FromStr for FireMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "binary" => Ok(Self::Binary),
            "ternary" => Ok(Self::Ternary),
            other => Err(format!("unknown fire mode {other:?}")),
        }
    }
}

impl fmt::Display for FireMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Binary => "binary",
            Self::Ternary => "ternary",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronConfig {
    pub tau_m: f64,
    pub v_th: f64,
    pub v_reset: f64,
    pub theta: f64,
    pub alpha: f64,
    pub fire_mode: FireMode,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            tau_m: 2.0,
            v_th: 1.0,
            v_reset: 0.0,
            theta: 2.0,
            alpha: 2.0,
            fire_mode: FireMode::Binary,
        }
    }
}

impl NeuronConfig {
    /// Leak factor `1 − 1/τ_m`.
    pub fn k_m(&self) -> f64 {
        1.0 - 1.0 / self.tau_m
    }

    /// Threshold of the negative spike, `−v_th / θ`.
    pub fn negative_threshold(&self) -> f64 {
        -self.v_th / self.theta
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_m", self.tau_m),
            ("v_th", self.v_th),
            ("theta", self.theta),
            ("alpha", self.alpha),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {value}")));
            }
        }
        if !self.v_reset.is_finite() {
            return Err(Error::InvalidInput(format!("v_reset must be finite, got {}", self.v_reset)));
        }
        Ok(())
    }
}

/// `T × dim` spike tensor, row-major by time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTrain {
    t_steps: usize,
    dim: usize,
    spikes: Vec<i8>,
}

impl SpikeTrain {
    pub fn new(t_steps: usize, dim: usize, spikes: Vec<i8>) -> Result<Self> {
        if spikes.len() != t_steps * dim {
            return Err(Error::DimensionMismatch {
                context: "spike train",
                expected: t_steps * dim,
                actual: spikes.len(),
            });
        }
        if let Some(bad) = spikes.iter().find(|&&s| !(-1..=1).contains(&s)) {
            return Err(Error::InvalidInput(format!("spike value {bad} outside {{-1, 0, 1}}")));
        }
        Ok(Self { t_steps, dim, spikes })
    }

    pub fn t_steps(&self) -> usize {
        self.t_steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spikes(&self) -> &[i8] {
        &self.spikes
    }

    /// Spikes emitted at step `t` (0-based).
    pub fn step(&self, t: usize) -> &[i8] {
        &self.spikes[t * self.dim..(t + 1) * self.dim]
    }

    pub fn count_nonzero(&self) -> usize {
        self.spikes.iter().filter(|&&s| s != 0).count()
    }

    /// Signed spike count per column divided by `T`.
    pub fn rates(&self) -> Vec<f64> {
        let mut sums = vec![0i64; self.dim];
        for t in 0..self.t_steps {
            for (s, &v) in sums.iter_mut().zip(self.step(t)) {
                *s += i64::from(v);
            }
        }
        sums.iter().map(|&s| s as f64 / self.t_steps as f64).collect()
    }
}

/// Per-class firing rates.
#[derive(Debug, Clone, PartialEq)]
pub struct FiringRate {
    pub rates: Vec<f64>,
}

impl FiringRate {
    pub fn from_counts(counts: &[i64], t_steps: usize) -> Self {
        Self {
            rates: counts.iter().map(|&c| c as f64 / t_steps as f64).collect(),
        }
    }
}

/// Per-step Bernoulli sampler for one λ row. Columns with `λ ≤ 0` never fire
/// and columns with `λ ≥ 1` always fire, so neither consumes random draws.
#[derive(Debug, Clone)]
pub struct BernoulliEncoder {
    dim: usize,
    certain: Vec<u32>,
    uncertain: Vec<(u32, f64)>,
}

impl BernoulliEncoder {
    pub fn new(lambda_row: &[f64]) -> Result<Self> {
        let mut certain = Vec::new();
        let mut uncertain = Vec::new();
        for (j, &lambda) in lambda_row.iter().enumerate() {
            if !lambda.is_finite() {
                return Err(Error::NonFinite {
                    context: "encoder rates",
                    position: j,
                    value: lambda,
                });
            }
            let p = lambda.clamp(0.0, 1.0);
            if p >= 1.0 {
                certain.push(j as u32);
            } else if p > 0.0 {
                uncertain.push((j as u32, p));
            }
        }
        Ok(Self {
            dim: lambda_row.len(),
            certain,
            uncertain,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Expected number of input spikes per step.
    pub fn expected_spikes(&self) -> f64 {
        self.certain.len() as f64 + self.uncertain.iter().map(|&(_, p)| p).sum::<f64>()
    }

    /// Appends the indices that fire this step to `out` (ascending order).
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<u32>) {
        let start = out.len();
        out.extend_from_slice(&self.certain);
        for &(j, p) in &self.uncertain {
            if rng.gen::<f64>() < p {
                out.push(j);
            }
        }
        if !self.certain.is_empty() && !self.uncertain.is_empty() {
            out[start..].sort_unstable();
        }
    }
}

/// Samples a `T × d` spike train with `P(o_tj = 1) = clamp(λ_j, 0, 1)`.
pub fn bernoulli_encode<R: Rng + ?Sized>(
    lambda_row: &[f64],
    t_steps: usize,
    rng: &mut R,
) -> Result<SpikeTrain> {
    if t_steps == 0 {
        return Err(Error::InvalidInput("t_steps must be at least 1".into()));
    }
    let encoder = BernoulliEncoder::new(lambda_row)?;
    let dim = lambda_row.len();
    let mut spikes = vec![0i8; t_steps * dim];
    let mut fired = Vec::new();
    for t in 0..t_steps {
        fired.clear();
        encoder.sample_step(rng, &mut fired);
        for &j in &fired {
            spikes[t * dim + j as usize] = 1;
        }
    }
    Ok(SpikeTrain { t_steps, dim, spikes })
}

/// Linear synapses `ψ` (d × C, row-major) feeding `C` LIF neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct LifLayer {
    dim: usize,
    n_classes: usize,
    weights: Vec<f64>,
    pub config: NeuronConfig,
    membrane: Vec<f64>,
}

impl LifLayer {
    pub fn new(dim: usize, n_classes: usize, config: NeuronConfig) -> Self {
        Self {
            dim,
            n_classes,
            weights: vec![0.0; dim * n_classes],
            config,
            membrane: vec![0.0; n_classes],
        }
    }

    pub fn with_weights(dim: usize, n_classes: usize, weights: Vec<f64>, config: NeuronConfig) -> Result<Self> {
        if weights.len() != dim * n_classes {
            return Err(Error::DimensionMismatch {
                context: "layer weights",
                expected: dim * n_classes,
                actual: weights.len(),
            });
        }
        if let Some((position, &value)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite()) {
            return Err(Error::NonFinite {
                context: "layer weights",
                position,
                value,
            });
        }
        config.validate()?;
        Ok(Self {
            dim,
            n_classes,
            weights,
            config,
            membrane: vec![0.0; n_classes],
        })
    }

    /// Uniform initialization in `±scale`.
    pub fn random<R: Rng + ?Sized>(dim: usize, n_classes: usize, config: NeuronConfig, scale: f64, rng: &mut R) -> Self {
        let mut layer = Self::new(dim, n_classes, config);
        for w in &mut layer.weights {
            *w = rng.gen_range(-scale..=scale);
        }
        layer
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn weight(&self, j: usize, c: usize) -> f64 {
        self.weights[j * self.n_classes + c]
    }

    /// Synaptic weights feeding class `c` (column `c` of ψ).
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.dim).map(|j| self.weight(j, c)).collect()
    }

    pub fn membrane(&self) -> &[f64] {
        &self.membrane
    }

    pub fn set_membrane(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_classes {
            return Err(Error::DimensionMismatch {
                context: "membrane",
                expected: self.n_classes,
                actual: values.len(),
            });
        }
        self.membrane.copy_from_slice(values);
        Ok(())
    }

    pub fn reset_membrane(&mut self) {
        self.membrane.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `V ← k_m V + v_reset/τ_m`, before synaptic input is added.
    fn leak(&mut self) {
        let k_m = self.config.k_m();
        let rest = self.config.v_reset / self.config.tau_m;
        for v in &mut self.membrane {
            *v = k_m * *v + rest;
        }
    }

    fn add_row(&mut self, j: usize, sign: i8) {
        let row = &self.weights[j * self.n_classes..(j + 1) * self.n_classes];
        match sign {
            1 => self.membrane.iter_mut().zip(row).for_each(|(v, w)| *v += w),
            -1 => self.membrane.iter_mut().zip(row).for_each(|(v, w)| *v -= w),
            _ => {}
        }
    }

    /// Charge step from a dense spike vector of length `d`.
    pub fn charge(&mut self, input_spikes: &[i8]) -> Result<()> {
        if input_spikes.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "charge input",
                expected: self.dim,
                actual: input_spikes.len(),
            });
        }
        self.leak();
        for (j, &s) in input_spikes.iter().enumerate() {
            if s != 0 {
                self.add_row(j, s);
            }
        }
        Ok(())
    }

    /// Charge step from the indices of inputs that spiked with value 1.
    pub fn charge_events(&mut self, fired: &[u32]) {
        self.leak();
        for &j in fired {
            self.add_row(j as usize, 1);
        }
    }

    /// Threshold the current membrane.
    pub fn fire(&self) -> Vec<i8> {
        let mut out = vec![0; self.n_classes];
        self.fire_into(&mut out);
        out
    }

    fn fire_into(&self, out: &mut [i8]) {
        let cfg = &self.config;
        let negative = cfg.negative_threshold();
        for (o, &v) in out.iter_mut().zip(&self.membrane) {
            *o = if v >= cfg.v_th {
                1
            } else if cfg.fire_mode == FireMode::Ternary && v <= negative {
                -1
            } else {
                0
            };
        }
    }

    /// Soft reset: subtract `v_th` after a positive spike, add `v_th/θ` after
    /// a negative one.
    pub fn reset(&mut self, fired: &[i8]) -> Result<()> {
        if fired.len() != self.n_classes {
            return Err(Error::DimensionMismatch {
                context: "reset spikes",
                expected: self.n_classes,
                actual: fired.len(),
            });
        }
        let up = self.config.v_th;
        let down = self.config.v_th / self.config.theta;
        for (v, &s) in self.membrane.iter_mut().zip(fired) {
            match s {
                1 => *v -= up,
                -1 => *v += down,
                _ => {}
            }
        }
        Ok(())
    }
}

/// Input spikes of one node in sparse form: per step, the indices that fired.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseSpikes {
    pub dim: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<u32>,
}

impl SparseSpikes {
    pub fn t_steps(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn step(&self, t: usize) -> &[u32] {
        &self.indices[self.offsets[t]..self.offsets[t + 1]]
    }

    pub fn to_dense(&self) -> SpikeTrain {
        let t_steps = self.t_steps();
        let mut spikes = vec![0i8; t_steps * self.dim];
        for t in 0..t_steps {
            for &j in self.step(t) {
                spikes[t * self.dim + j as usize] = 1;
            }
        }
        SpikeTrain {
            t_steps,
            dim: self.dim,
            spikes,
        }
    }
}

/// Event counts gathered during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ForwardStats {
    /// Non-zero pre-synaptic spikes.
    pub input_spikes: u64,
    /// Non-zero post-synaptic spikes.
    pub output_spikes: u64,
    /// Steps in which at least one input spike arrived.
    pub active_steps: u64,
}

/// Everything recorded during a traced forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: SparseSpikes,
    /// `T × C` post-synaptic spikes.
    pub output: SpikeTrain,
    /// `T × C` membrane potentials after charging, before reset.
    pub membrane: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub rates: FiringRate,
    pub counts: Vec<i64>,
    pub stats: ForwardStats,
    pub trace: Option<ForwardTrace>,
}

/// Runs `T` encode → charge → fire → reset steps for one node, starting from
/// a zeroed membrane. The layer's membrane is left at its final state.
pub fn forward<R: Rng + ?Sized>(
    layer: &mut LifLayer,
    lambda_row: &[f64],
    t_steps: usize,
    rng: &mut R,
    record: bool,
) -> Result<ForwardOutput> {
    if lambda_row.len() != layer.dim {
        return Err(Error::DimensionMismatch {
            context: "forward input",
            expected: layer.dim,
            actual: lambda_row.len(),
        });
    }
    if t_steps == 0 {
        return Err(Error::InvalidInput("t_steps must be at least 1".into()));
    }
    let encoder = BernoulliEncoder::new(lambda_row)?;
    let c = layer.n_classes;
    layer.reset_membrane();

    let mut counts = vec![0i64; c];
    let mut stats = ForwardStats::default();
    let mut fired_in: Vec<u32> = Vec::new();
    let mut fired_out = vec![0i8; c];
    let mut trace = record.then(|| ForwardTrace {
        input: SparseSpikes {
            dim: layer.dim,
            offsets: vec![0],
            indices: Vec::new(),
        },
        output: SpikeTrain {
            t_steps,
            dim: c,
            spikes: Vec::with_capacity(t_steps * c),
        },
        membrane: Vec::with_capacity(t_steps * c),
    });

    for _ in 0..t_steps {
        fired_in.clear();
        encoder.sample_step(rng, &mut fired_in);
        layer.charge_events(&fired_in);
        layer.fire_into(&mut fired_out);

        stats.input_spikes += fired_in.len() as u64;
        if !fired_in.is_empty() {
            stats.active_steps += 1;
        }
        for (count, &s) in counts.iter_mut().zip(&fired_out) {
            *count += i64::from(s);
            if s != 0 {
                stats.output_spikes += 1;
            }
        }
        if let Some(trace) = trace.as_mut() {
            trace.input.indices.extend_from_slice(&fired_in);
            trace.input.offsets.push(trace.input.indices.len());
            trace.output.spikes.extend_from_slice(&fired_out);
            trace.membrane.extend_from_slice(&layer.membrane);
        }
        layer.reset(&fired_out)?;
    }

    Ok(ForwardOutput {
        rates: FiringRate::from_counts(&counts, t_steps),
        counts,
        stats,
        trace,
    })
}

/// Index of the largest rate; ties go to the lowest index.
pub fn predict(rates: &FiringRate) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &r) in rates.rates.iter().enumerate() {
        match best {
            Some((_, b)) if r <= b => {}
            _ => best = Some((i, r)),
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidInput("cannot predict from an empty rate vector".into()))
}

/// Membrane trace as `t,neuron,v,spike` lines (1-based `t`, pre-reset `v`).
pub fn membrane_trace_csv(trace: &ForwardTrace) -> String {
    let c = trace.output.dim();
    let mut out = String::from("t,neuron,v,spike\n");
    for t in 0..trace.output.t_steps() {
        for neuron in 0..c {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t + 1,
                neuron,
                trace.membrane[t * c + neuron],
                trace.output.step(t)[neuron]
            ));
        }
    }
    out
}
