//! Operation counting and energy estimates.
//!
//! A synaptic operation (SOP) is one membrane-potential change event: an output
//! neuron's charge update in a step where at least one input spike arrived, or
//! a fire/reset event. Leak-only steps cost nothing. Dense baselines are
//! counted in multiply-accumulates (MACs), one per weight per node.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PropagatedFeatures;
use crate::neuron::{forward, LifLayer};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpCounter {
    pub macs: u64,
    pub sops: u64,
    pub spikes: u64,
    pub nodes_evaluated: u64,
}

impl OpCounter {
    pub fn merge(&mut self, other: &OpCounter) {
        self.macs += other.macs;
        self.sops += other.sops;
        self.spikes += other.spikes;
        self.nodes_evaluated += other.nodes_evaluated;
    }

    pub fn sops_per_node(&self) -> f64 {
        if self.nodes_evaluated == 0 {
            0.0
        } else {
            self.sops as f64 / self.nodes_evaluated as f64
        }
    }

    pub fn spikes_per_node(&self) -> f64 {
        if self.nodes_evaluated == 0 {
            0.0
        } else {
            self.spikes as f64 / self.nodes_evaluated as f64
        }
    }
}

/// Runs inference over `nodes` and counts spikes and SOPs. No MACs are
/// charged: propagation happens once, off-chip, before inference.
pub fn count_inference(
    layer: &LifLayer,
    h: &PropagatedFeatures,
    nodes: &[usize],
    t_steps: usize,
    seed: u64,
) -> Result<OpCounter> {
    let c = layer.n_classes() as u64;
    let per_node: Vec<OpCounter> = nodes
        .par_iter()
        .map(|&node| {
            if node >= h.n_nodes() {
                return Err(Error::NodeOutOfRange {
                    index: node,
                    n_nodes: h.n_nodes(),
                });
            }
            let mut local = layer.clone();
            let mut rng = stream(seed, Purpose::Energy, 0, node as u64);
            let out = forward(&mut local, h.row(node), t_steps, &mut rng, false)?;
            let stats = out.stats;
            Ok(OpCounter {
                macs: 0,
                sops: stats.active_steps * c + stats.output_spikes,
                spikes: stats.input_spikes + stats.output_spikes,
                nodes_evaluated: 1,
            })
        })
        .collect::<Result<_>>()?;
    let mut total = OpCounter::default();
    for counter in &per_node {
        total.merge(counter);
    }
    Ok(total)
}

/// MACs per node for a dense feed-forward stack: `Σ in × out`. With no hidden
/// layers this is the single `d × C` linear layer of the propagated-feature
/// baseline.
pub fn count_dense_reference(layer_dims: &[(usize, usize)]) -> u64 {
    layer_dims.iter().map(|&(i, o)| i as u64 * o as u64).sum()
}

/// Convenience for the single-layer baseline on `d` features and `c` classes.
pub fn count_linear_reference(d: usize, c: usize) -> u64 {
    count_dense_reference(&[(d, c)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlatformSpec {
    Gpu { power_watts: f64, gflops: f64 },
    Neuromorphic { energy_per_spike_pj: f64, supply_volts: f64 },
}

impl PlatformSpec {
    /// 280 W at 16,310 GFLOPS.
    pub const TITAN_RTX: PlatformSpec = PlatformSpec::Gpu {
        power_watts: 280.0,
        gflops: 16_310.0,
    };
    /// 3.7 pJ per spike at 1.8 V.
    pub const ROLLS: PlatformSpec = PlatformSpec::Neuromorphic {
        energy_per_spike_pj: 3.7,
        supply_volts: 1.8,
    };

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Gpu { .. } => "gpu",
            Self::Neuromorphic { .. } => "neuromorphic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub platform: PlatformSpec,
    /// FLOPs on a GPU, spikes on a neuromorphic chip.
    pub total_events: f64,
    pub joules: f64,
}

/// GPU: `events / (GFLOPS · 10⁹) · watts`. Neuromorphic: `events · pJ · 10⁻¹²`.
/// The supply voltage is carried for reporting only.
pub fn estimate_energy(spec: PlatformSpec, events: f64) -> Result<EnergyReport> {
    if !(events.is_finite() && events >= 0.0) {
        return Err(Error::InvalidInput(format!("event count must be non-negative, got {events}")));
    }
    let joules = match spec {
        PlatformSpec::Gpu { power_watts, gflops } => {
            if !(gflops > 0.0) {
                return Err(Error::InvalidInput(format!("GFLOPS must be positive, got {gflops}")));
            }
            if !(power_watts > 0.0) {
                return Err(Error::InvalidInput(format!("power must be positive, got {power_watts}")));
            }
            events / (gflops * 1e9) * power_watts
        }
        PlatformSpec::Neuromorphic {
            energy_per_spike_pj,
            supply_volts,
        } => {
            if !(energy_per_spike_pj > 0.0 && supply_volts > 0.0) {
                return Err(Error::InvalidInput(
                    "energy per spike and supply voltage must be positive".into(),
                ));
            }
            events * energy_per_spike_pj * 1e-12
        }
    };
    Ok(EnergyReport {
        platform: spec,
        total_events: events,
        joules,
    })
}

/// `1.39K` / `1.50M` style rendering used for operation counts.
pub fn format_ops(count: f64) -> String {
    if count >= 1e6 {
        format!("{:.2}M", count / 1e6)
    } else if count >= 1e3 {
        format!("{:.2}K", count / 1e3)
    } else {
        format!("{count:.0}")
    }
}

/// Three significant digits with a signed two-digit exponent: `1.01e-04`.
pub fn format_sci(value: f64) -> String {
    let raw = format!("{value:.2e}");
    match raw.split_once('e') {
        Some((mantissa, exp)) => {
            let exp: i32 = exp.parse().unwrap_or(0);
            let sign = if exp < 0 { '-' } else { '+' };
            format!("{mantissa}e{sign}{:02}", exp.abs())
        }
        None => raw,
    }
}

impl fmt::Display for EnergyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "platform={} events={} joules={}",
            self.platform.kind(),
            format_sci(self.total_events),
            format_sci(self.joules)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FeatureMatrix;
    use crate::neuron::NeuronConfig;

    #[test]
    fn table_energies() {
        let chip = estimate_energy(PlatformSpec::ROLLS, 2.73e7).unwrap();
        assert!((chip.joules - 1.0101e-4).abs() < 1e-12);
        let gpu = estimate_energy(PlatformSpec::TITAN_RTX, 4.14e9).unwrap();
        assert!((gpu.joules - 0.071_072_961_373_390_56).abs() < 1e-12);
    }

    #[test]
    fn zero_events_cost_nothing() {
        assert_eq!(estimate_energy(PlatformSpec::ROLLS, 0.0).unwrap().joules, 0.0);
        assert_eq!(estimate_energy(PlatformSpec::TITAN_RTX, 0.0).unwrap().joules, 0.0);
    }

    #[test]
    fn energy_is_linear() {
        for spec in [PlatformSpec::ROLLS, PlatformSpec::TITAN_RTX] {
            let one = estimate_energy(spec, 12_345.0).unwrap().joules;
            let two = estimate_energy(spec, 24_690.0).unwrap().joules;
            assert_eq!(two, 2.0 * one);
        }
    }

    #[test]
    fn non_positive_gflops_is_rejected() {
        let spec = PlatformSpec::Gpu {
            power_watts: 280.0,
            gflops: 0.0,
        };
        assert!(estimate_energy(spec, 1.0).is_err());
    }

    #[test]
    fn dense_reference_counts() {
        assert_eq!(count_linear_reference(1433, 7), 10_031);
        assert_eq!(count_linear_reference(500, 3), 1_500);
        assert_eq!(count_dense_reference(&[]), 0);
        assert_eq!(count_dense_reference(&[(10, 4), (4, 2)]), 48);
    }

    #[test]
    fn ops_formatting() {
        assert_eq!(format_ops(10_031.0), "10.03K");
        assert_eq!(format_ops(1_500.0), "1.50K");
        assert_eq!(format_ops(22_218.0), "22.22K");
        assert_eq!(format_ops(1_530_000.0), "1.53M");
    }

    #[test]
    fn scientific_rendering() {
        assert_eq!(format_sci(1.0101e-4), "1.01e-04");
        assert_eq!(format_sci(2.73e7), "2.73e+07");
        assert_eq!(format_sci(0.0), "0.00e+00");
        let report = estimate_energy(PlatformSpec::ROLLS, 2.73e7).unwrap();
        assert_eq!(
            report.to_string(),
            "platform=neuromorphic events=2.73e+07 joules=1.01e-04"
        );
    }

    #[test]
    fn silent_input_counts_nothing() {
        let layer = LifLayer::with_weights(2, 3, vec![1.0; 6], NeuronConfig::default()).unwrap();
        let h = PropagatedFeatures {
            data: FeatureMatrix::zeros(4, 2),
            k_used: 0,
        };
        let counter = count_inference(&layer, &h, &[0, 1, 2, 3], 50, 9).unwrap();
        assert_eq!(counter.sops, 0);
        assert_eq!(counter.spikes, 0);
        assert_eq!(counter.nodes_evaluated, 4);
    }

    #[test]
    fn one_input_spike_charges_every_output() {
        let layer = LifLayer::with_weights(1, 3, vec![0.1; 3], NeuronConfig::default()).unwrap();
        let h = PropagatedFeatures {
            data: FeatureMatrix::from_rows(&[vec![1.0]]).unwrap(),
            k_used: 0,
        };
        let counter = count_inference(&layer, &h, &[0], 1, 0).unwrap();
        assert_eq!(counter.sops, 3);
        assert_eq!(counter.spikes, 1);
    }
}
