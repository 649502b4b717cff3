use proptest::prelude::*;
use spiking_gcn::energy::{count_inference, estimate_energy, PlatformSpec};
use spiking_gcn::graph::{FeatureMatrix, PropagatedFeatures};
use spiking_gcn::neuron::{LifLayer, NeuronConfig};

fn features(rows: Vec<Vec<f64>>) -> PropagatedFeatures {
    PropagatedFeatures {
        data: FeatureMatrix::from_rows(&rows).unwrap(),
        k_used: 2,
    }
}

fn layer(weights: Vec<f64>) -> LifLayer {
    LifLayer::with_weights(3, 2, weights, NeuronConfig::default()).unwrap()
}

proptest! {
    #[test]
    fn sop_count_respects_structural_limit(
        weights in prop::collection::vec(-1.5f64..1.5, 6),
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..6),
        t_steps in 1usize..40,
        seed in any::<u64>(),
    ) {
        let n = rows.len();
        let h = features(rows);
        let layer = layer(weights);
        let nodes: Vec<usize> = (0..n).collect();
        let counter = count_inference(&layer, &h, &nodes, t_steps, seed).unwrap();
        prop_assert!(counter.sops <= (t_steps * 2 * n) as u64 + counter.spikes);
        prop_assert_eq!(counter.macs, 0);
        prop_assert_eq!(counter, count_inference(&layer, &h, &nodes, t_steps, seed).unwrap());
    }

    #[test]
    fn joules_follow_closed_form(events in 0.0f64..1e12, watts in 1.0f64..500.0, gflops in 1.0f64..1e5, pj in 0.1f64..50.0) {
        let gpu = estimate_energy(PlatformSpec::Gpu { power_watts: watts, gflops }, events).unwrap();
        let expected = events / (gflops * 1e9) * watts;
        prop_assert!((gpu.joules - expected).abs() <= 1e-9 * expected.abs());
        let chip = estimate_energy(PlatformSpec::Neuromorphic { energy_per_spike_pj: pj, supply_volts: 1.8 }, events).unwrap();
        let expected = events * pj * 1e-12;
        prop_assert!((chip.joules - expected).abs() <= 1e-9 * expected.abs());
        prop_assert!(gpu.joules >= 0.0 && chip.joules >= 0.0);
    }
}

#[test]
fn halving_rates_does_not_add_spikes() {
    let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![0.2 + 0.1 * (i % 4) as f64, 0.9, 0.5]).collect();
    let halved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * 0.5).collect()).collect();
    let layer = layer(vec![0.4, -0.2, 0.3, 0.6, 0.1, 0.2]);
    let nodes: Vec<usize> = (0..8).collect();
    let total = |rows: &Vec<Vec<f64>>| -> u64 {
        (0..20)
            .map(|seed| count_inference(&layer, &features(rows.clone()), &nodes, 50, seed).unwrap().spikes)
            .sum()
    };
    assert!(total(&halved) <= total(&rows));
}

#[test]
fn no_nodes_means_no_events() {
    let counter = count_inference(&layer(vec![1.0; 6]), &features(vec![vec![1.0; 3]]), &[], 100, 0).unwrap();
    assert_eq!(counter.sops + counter.spikes + counter.nodes_evaluated, 0);
}

#[test]
fn out_of_range_node_is_reported() {
    assert!(count_inference(&layer(vec![1.0; 6]), &features(vec![vec![1.0; 3]]), &[1], 10, 0).is_err());
}
