//! Browser demo: three interactive views over the spiking core.
//!
//! * `simulate_neuron` drives one LIF neuron from Bernoulli inputs and
//!   returns its membrane trace and spikes.
//! * `spike_raster` samples a rate-coded raster and its empirical rates.
//! * `tail_curve` sweeps ε and compares the analytic tail bounds of the
//!   spike-driven linear output with Monte Carlo frequencies.
//!
//! Each exported function returns a JSON string; the plain Rust versions are
//! public for native use and testing.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use spiking_gcn::bounds::{analyze, empirical_tails};
use spiking_gcn::neuron::{bernoulli_encode, forward, FireMode, LifLayer, NeuronConfig};
use spiking_gcn::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeuronRun {
    /// Pre-reset membrane potential per step.
    pub membrane: Vec<f64>,
    pub spikes: Vec<i8>,
    /// Input indices that fired, per step.
    pub inputs: Vec<Vec<u32>>,
    pub rate: f64,
    pub v_th: f64,
    pub negative_threshold: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn run_neuron(
    lambda: &[f64],
    weight: f64,
    tau_m: f64,
    v_th: f64,
    theta: f64,
    ternary: bool,
    t_steps: usize,
    seed: u64,
) -> Result<NeuronRun, String> {
    let config = NeuronConfig {
        tau_m,
        v_th,
        theta,
        fire_mode: if ternary { FireMode::Ternary } else { FireMode::Binary },
        ..NeuronConfig::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    let mut layer = LifLayer::with_weights(lambda.len(), 1, vec![weight; lambda.len()], config).map_err(|e| e.to_string())?;
    let out = forward(&mut layer, lambda, t_steps, &mut stream(seed, Purpose::Custom(0xde), 0, 0), true)
        .map_err(|e| e.to_string())?;
    let trace = out.trace.expect("recorded forward");
    Ok(NeuronRun {
        inputs: (0..t_steps).map(|t| trace.input.step(t).to_vec()).collect(),
        spikes: trace.output.spikes().to_vec(),
        membrane: trace.membrane,
        rate: out.rates.rates[0],
        v_th,
        negative_threshold: ternary.then(|| config.negative_threshold()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Raster {
    pub t_steps: usize,
    /// Row-major `T × d` spikes.
    pub spikes: Vec<i8>,
    pub rates: Vec<f64>,
}

pub fn raster(lambda: &[f64], t_steps: usize, seed: u64) -> Result<Raster, String> {
    let train = bernoulli_encode(lambda, t_steps, &mut stream(seed, Purpose::Custom(0xdf), 0, 0)).map_err(|e| e.to_string())?;
    Ok(Raster {
        t_steps,
        rates: train.rates(),
        spikes: train.spikes().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailPoint {
    pub epsilon: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub lower_bound_clipped: f64,
    pub upper_bound_clipped: f64,
    pub lower_freq: f64,
    pub upper_freq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub expected: f64,
    pub sigma: f64,
    pub sigma_prime: f64,
    pub conservative_signed: bool,
    pub points: Vec<TailPoint>,
}

/// Evaluates `points` values of ε evenly spaced in `(0, eps_max]`.
pub fn tail_sweep(psi: &[f64], lambda: &[f64], eps_max: f64, points: usize, trials: usize, seed: u64) -> Result<TailCurve, String> {
    if points == 0 || !(eps_max > 0.0) {
        return Err("need at least one point and a positive epsilon range".into());
    }
    let mut curve = None;
    let mut out = Vec::with_capacity(points);
    for i in 1..=points {
        let epsilon = eps_max * i as f64 / points as f64;
        let report = analyze(psi, lambda, epsilon).map_err(|e| e.to_string())?;
        let mut rng = stream(seed, Purpose::Bounds, i as u64, 0);
        let (lower_freq, upper_freq) = empirical_tails(psi, lambda, epsilon, trials, &mut rng).map_err(|e| e.to_string())?;
        out.push(TailPoint {
            epsilon,
            lower_bound: report.lower_bound.sigma,
            upper_bound: report.upper_bound.sigma,
            lower_bound_clipped: report.lower_bound.sigma_prime,
            upper_bound_clipped: report.upper_bound.sigma_prime,
            lower_freq,
            upper_freq,
        });
        curve.get_or_insert((report.expected, report.sigma, report.sigma_prime, report.conservative_signed));
    }
    let (expected, sigma, sigma_prime, conservative_signed) = curve.expect("at least one point");
    Ok(TailCurve {
        expected,
        sigma,
        sigma_prime,
        conservative_signed,
        points: out,
    })
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsValue> {
    value
        .and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate_neuron(
    lambda: &[f64],
    weight: f64,
    tau_m: f64,
    v_th: f64,
    theta: f64,
    ternary: bool,
    t_steps: usize,
    seed: u32,
) -> Result<String, JsValue> {
    to_json(run_neuron(lambda, weight, tau_m, v_th, theta, ternary, t_steps, u64::from(seed)))
}

#[wasm_bindgen]
pub fn spike_raster(lambda: &[f64], t_steps: usize, seed: u32) -> Result<String, JsValue> {
    to_json(raster(lambda, t_steps, u64::from(seed)))
}

#[wasm_bindgen]
pub fn tail_curve(psi: &[f64], lambda: &[f64], eps_max: f64, points: usize, trials: usize, seed: u32) -> Result<String, JsValue> {
    to_json(tail_sweep(psi, lambda, eps_max, points, trials, u64::from(seed)))
}
