//! Concentration of the spike-driven linear output around its real-valued
//! counterpart.
//!
//! For independent `o_j ~ Bernoulli(λ_j)` and `Z = Σ ψ_j o_j`, the mean is
//! `E(Z) = Σ ψ_j λ_j`, which is exactly what a real-valued linear layer on the
//! propagated features would output. With `σ = Σ ψ_j² λ_j`, `σ' = Σ ψ_j²` and
//! `ψ̂ = max |ψ_j|`:
//!
//! ```text
//! Pr(Z < E(Z) − ε) ≤ exp(−ε² / 2σ)               ≤ exp(−ε² / 2σ')
//! Pr(Z > E(Z) + ε) ≤ exp(−ε² / 2(σ + ψ̂ε/3))      ≤ exp(−ε² / 2(σ' + ψ̂ε/3))
//! ```
//!
//! The first line needs non-negative weights. When any weight is negative the
//! lower tail uses the same Bernstein form as the upper tail (with `|ψ|`), and
//! the report is flagged `conservative_signed`. A degenerate distribution
//! (all-zero weights) reports the trivial bound 1.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::PropagatedFeatures;
use crate::neuron::LifLayer;
use crate::rng::{stream, Purpose};

/// A tail bound evaluated with the tight `σ` and the clip-controlled `σ'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBound {
    pub sigma: f64,
    pub sigma_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub expected: f64,
    pub sigma: f64,
    pub sigma_prime: f64,
    pub psi_hat: f64,
    pub epsilon: f64,
    pub lower_bound: TailBound,
    pub upper_bound: TailBound,
    /// The `σ'` form of the upper bound.
    pub failure_prob: f64,
    pub conservative_signed: bool,
}

fn sub_gaussian(epsilon: f64, variance: f64) -> f64 {
    if variance == 0.0 {
        return 1.0;
    }
    (-epsilon * epsilon / (2.0 * variance)).exp()
}

fn bernstein(epsilon: f64, variance: f64, psi_hat: f64) -> f64 {
    let denom = 2.0 * (variance + psi_hat * epsilon / 3.0);
    if denom == 0.0 {
        return 1.0;
    }
    (-epsilon * epsilon / denom).exp()
}

fn check_lambda(psi: &[f64], lambda: &[f64]) -> Result<()> {
    if psi.len() != lambda.len() {
        return Err(Error::DimensionMismatch {
            context: "bound inputs",
            expected: psi.len(),
            actual: lambda.len(),
        });
    }
    for (position, &value) in lambda.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::LambdaOutOfRange { position, value });
        }
    }
    Ok(())
}

pub fn analyze(psi: &[f64], lambda: &[f64], epsilon: f64) -> Result<BoundReport> {
    check_lambda(psi, lambda)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let expected: f64 = psi.iter().zip(lambda).map(|(p, l)| p * l).sum();
    let sigma: f64 = psi.iter().zip(lambda).map(|(p, l)| p * p * l).sum();
    let sigma_prime: f64 = psi.iter().map(|p| p * p).sum();
    let psi_hat = psi.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
    let signed = psi.iter().any(|&p| p < 0.0);

    let upper_bound = TailBound {
        sigma: bernstein(epsilon, sigma, psi_hat),
        sigma_prime: bernstein(epsilon, sigma_prime, psi_hat),
    };
    let lower_bound = if signed {
        upper_bound
    } else {
        TailBound {
            sigma: sub_gaussian(epsilon, sigma),
            sigma_prime: sub_gaussian(epsilon, sigma_prime),
        }
    };
    Ok(BoundReport {
        expected,
        sigma,
        sigma_prime,
        psi_hat,
        epsilon,
        lower_bound,
        upper_bound,
        failure_prob: upper_bound.sigma_prime,
        conservative_signed: signed,
    })
}

/// Monte Carlo frequencies of `Z < E(Z) − ε` and `Z > E(Z) + ε`.
pub fn empirical_tails<R: Rng + ?Sized>(
    psi: &[f64],
    lambda: &[f64],
    epsilon: f64,
    trials: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if psi.len() != lambda.len() {
        return Err(Error::DimensionMismatch {
            context: "tail inputs",
            expected: psi.len(),
            actual: lambda.len(),
        });
    }
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let probs: Vec<f64> = lambda.iter().map(|l| l.clamp(0.0, 1.0)).collect();
    let expected: f64 = psi.iter().zip(&probs).map(|(p, l)| p * l).sum();
    let (mut below, mut above) = (0usize, 0usize);
    for _ in 0..trials {
        let mut z = 0.0;
        for (&p, &l) in psi.iter().zip(&probs) {
            // Certain outcomes consume no draw.
            let fired = if l >= 1.0 {
                true
            } else if l <= 0.0 {
                false
            } else {
                rng.gen::<f64>() < l
            };
            if fired {
                z += p;
            }
        }
        if z < expected - epsilon {
            below += 1;
        } else if z > expected + epsilon {
            above += 1;
        }
    }
    Ok((below as f64 / trials as f64, above as f64 / trials as f64))
}

/// Per-class report for one node of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAudit {
    pub class: usize,
    pub report: BoundReport,
    pub lower_freq: Option<f64>,
    pub upper_freq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelAudit {
    pub node: usize,
    pub classes: Vec<ClassAudit>,
    pub worst_failure_prob: f64,
}

/// Applies [`analyze`] to every output class using column `ψ_{·c}` and the
/// node's clamped rates; with `trials > 0` also runs [`empirical_tails`].
pub fn audit_model(
    layer: &LifLayer,
    h: &PropagatedFeatures,
    node: usize,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<ModelAudit> {
    if node >= h.n_nodes() {
        return Err(Error::NodeOutOfRange {
            index: node,
            n_nodes: h.n_nodes(),
        });
    }
    if h.dim() != layer.dim() {
        return Err(Error::DimensionMismatch {
            context: "audit features",
            expected: layer.dim(),
            actual: h.dim(),
        });
    }
    let lambda: Vec<f64> = h.row(node).iter().map(|l| l.clamp(0.0, 1.0)).collect();
    let mut classes = Vec::with_capacity(layer.n_classes());
    for class in 0..layer.n_classes() {
        let psi = layer.column(class);
        let report = analyze(&psi, &lambda, epsilon)?;
        let (lower_freq, upper_freq) = if trials > 0 {
            let mut rng = stream(seed, Purpose::Bounds, class as u64, node as u64);
            let (l, u) = empirical_tails(&psi, &lambda, epsilon, trials, &mut rng)?;
            (Some(l), Some(u))
        } else {
            (None, None)
        };
        classes.push(ClassAudit {
            class,
            report,
            lower_freq,
            upper_freq,
        });
    }
    let worst_failure_prob = classes
        .iter()
        .map(|c| c.report.failure_prob)
        .fold(0.0, f64::max);
    Ok(ModelAudit {
        node,
        classes,
        worst_failure_prob,
    })
}
