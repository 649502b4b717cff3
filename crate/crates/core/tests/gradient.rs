//! Backpropagation through time against central finite differences.
//!
//! The oracle network keeps the hard fire/reset dynamics but reads out the
//! smoothed rate `(1/T) Σ_t G(V^t − v_th)` (minus `G(−V^t − v_th/θ)` in
//! ternary mode). The reset depends on ψ only through piecewise-constant fire
//! decisions, so for a small step `h` that flips no decision its finite
//! differences equal the detached-reset gradient exactly.

use rand::Rng;
use spiking_gcn::neuron::{FireMode, LifLayer, NeuronConfig, SpikeTrain};
use spiking_gcn::rng::{stream, Purpose};
use spiking_gcn::train::{backward_through_time, mse_grad, mse_loss, surrogate_value};
use spiking_gcn::FiringRate;

struct Smoothed {
    loss: f64,
    rates: FiringRate,
    membrane: Vec<f64>,
    fired: Vec<i8>,
}

fn smoothed_forward(weights: &[f64], d: usize, c: usize, cfg: NeuronConfig, input: &SpikeTrain, label: usize) -> Smoothed {
    let mut layer = LifLayer::with_weights(d, c, weights.to_vec(), cfg).unwrap();
    let t_steps = input.t_steps();
    let mut rates = vec![0.0; c];
    let mut membrane = Vec::new();
    let mut fired = Vec::new();
    for t in 0..t_steps {
        layer.charge(input.step(t)).unwrap();
        let v = layer.membrane().to_vec();
        for (r, &vc) in rates.iter_mut().zip(&v) {
            *r += surrogate_value(vc - cfg.v_th, cfg.alpha);
            if cfg.fire_mode == FireMode::Ternary {
                *r -= surrogate_value(-vc + cfg.negative_threshold(), cfg.alpha);
            }
        }
        let out = layer.fire();
        layer.reset(&out).unwrap();
        membrane.extend_from_slice(&v);
        fired.extend_from_slice(&out);
    }
    rates.iter_mut().for_each(|r| *r /= t_steps as f64);
    let rates = FiringRate { rates };
    Smoothed {
        loss: mse_loss(&rates, label, c).unwrap(),
        rates,
        membrane,
        fired,
    }
}

/// Largest relative error over all weights, or `None` when a perturbation
/// flips a hard fire decision.
fn max_relative_error(seed: u64) -> Option<f64> {
    let mut rng = stream(seed, Purpose::Custom(99), 0, 0);
    let d = rng.gen_range(1..=8);
    let c = rng.gen_range(1..=3);
    let t_steps = rng.gen_range(1..=5);
    let cfg = NeuronConfig {
        tau_m: rng.gen_range(1.0..4.0),
        alpha: rng.gen_range(0.5..4.0),
        fire_mode: if rng.gen_bool(0.5) { FireMode::Binary } else { FireMode::Ternary },
        ..NeuronConfig::default()
    };
    let weights: Vec<f64> = (0..d * c).map(|_| rng.gen_range(-1.0..1.5)).collect();
    let spikes: Vec<i8> = (0..t_steps * d).map(|_| i8::from(rng.gen_bool(0.6))).collect();
    let input = SpikeTrain::new(t_steps, d, spikes).unwrap();
    let label = rng.gen_range(0..c);

    let base = smoothed_forward(&weights, d, c, cfg, &input, label);
    let layer = LifLayer::with_weights(d, c, weights.clone(), cfg).unwrap();
    let fired = SpikeTrain::new(t_steps, c, base.fired.clone()).unwrap();
    let analytic = backward_through_time(&layer, &input, &fired, &base.membrane, &mse_grad(&base.rates, label)).unwrap();

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = weights.clone();
        plus[i] += h;
        let mut minus = weights.clone();
        minus[i] -= h;
        let up = smoothed_forward(&plus, d, c, cfg, &input, label);
        let down = smoothed_forward(&minus, d, c, cfg, &input, label);
        if up.fired != base.fired || down.fired != base.fired {
            return None;
        }
        let numeric = (up.loss - down.loss) / (2.0 * h);
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / scale);
    }
    Some(worst)
}

#[test]
fn matches_finite_differences_on_random_instances() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 100 {
        if let Some(err) = max_relative_error(seed) {
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
            checked += 1;
        }
        seed += 1;
    }
    assert!(seed < 110, "too many instances sat on a fire boundary");
}

#[test]
fn single_step_chain_rule() {
    let cfg = NeuronConfig::default();
    let layer = LifLayer::with_weights(2, 2, vec![0.7, -0.2, 0.4, 0.9], cfg).unwrap();
    let input = SpikeTrain::new(1, 2, vec![1, 0]).unwrap();
    let fired = SpikeTrain::new(1, 2, vec![0, 0]).unwrap();
    let membrane = [0.7, -0.2];
    let loss_grad = [0.3, -0.5];
    let grad = backward_through_time(&layer, &input, &fired, &membrane, &loss_grad).unwrap();
    let g = |v: f64| spiking_gcn::train::surrogate_grad(v - cfg.v_th, cfg.alpha);
    assert_eq!(grad[0], 0.3 * g(0.7));
    assert_eq!(grad[1], -0.5 * g(-0.2));
    assert_eq!(&grad[2..], &[0.0, 0.0]);
}

#[test]
fn silent_input_has_zero_gradient() {
    let cfg = NeuronConfig::default();
    let layer = LifLayer::with_weights(3, 2, vec![0.5; 6], cfg).unwrap();
    let input = SpikeTrain::new(4, 3, vec![0; 12]).unwrap();
    let fired = SpikeTrain::new(4, 2, vec![0; 8]).unwrap();
    let grad = backward_through_time(&layer, &input, &fired, &[0.0; 8], &[1.0, -1.0]).unwrap();
    assert!(grad.iter().all(|&g| g == 0.0));
}
