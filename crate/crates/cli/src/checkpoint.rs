//! Plain-text weight checkpoints: a `key value` header followed by the
//! row-major `d × C` weight matrix, one feature row per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use spiking_gcn::neuron::{FireMode, LifLayer, NeuronConfig};

use crate::CliError;

const MAGIC: &str = "# spiking-gcn checkpoint v1";

pub fn render(layer: &LifLayer) -> String {
    let cfg = &layer.config;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "dim {}", layer.dim());
    let _ = writeln!(out, "classes {}", layer.n_classes());
    let _ = writeln!(out, "tau_m {}", cfg.tau_m);
    let _ = writeln!(out, "v_th {}", cfg.v_th);
    let _ = writeln!(out, "v_reset {}", cfg.v_reset);
    let _ = writeln!(out, "theta {}", cfg.theta);
    let _ = writeln!(out, "alpha {}", cfg.alpha);
    let _ = writeln!(out, "fire_mode {}", cfg.fire_mode);
    out.push_str("weights\n");
    for row in layer.weights().chunks(layer.n_classes().max(1)) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn save(layer: &LifLayer, path: &Path) -> Result<(), CliError> {
    fs::write(path, render(layer)).map_err(|e| CliError::io(path, e))
}

pub fn parse(text: &str, path: &Path) -> Result<LifLayer, CliError> {
    let bad = |line: usize, message: String| CliError::Checkpoint {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(bad(1, "missing checkpoint header".into())),
    }

    let mut header = std::collections::HashMap::new();
    for (number, line) in lines.by_ref() {
        if line == "weights" {
            break;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| bad(number, format!("expected `key value`, got {line:?}")))?;
        header.insert(key.to_string(), (number, value.trim().to_string()));
    }
    let field = |key: &str| -> Result<(usize, String), CliError> {
        header
            .get(key)
            .cloned()
            .ok_or_else(|| bad(0, format!("missing header field {key}")))
    };
    let number = |key: &str| -> Result<f64, CliError> {
        let (line, value) = field(key)?;
        value.parse().map_err(|_| bad(line, format!("{key} is not a number: {value:?}")))
    };
    let count = |key: &str| -> Result<usize, CliError> {
        let (line, value) = field(key)?;
        value.parse().map_err(|_| bad(line, format!("{key} is not a count: {value:?}")))
    };

    let dim = count("dim")?;
    let classes = count("classes")?;
    let (mode_line, mode) = field("fire_mode")?;
    let fire_mode: FireMode = mode.parse().map_err(|e: String| bad(mode_line, e))?;
    let config = NeuronConfig {
        tau_m: number("tau_m")?,
        v_th: number("v_th")?,
        v_reset: number("v_reset")?,
        theta: number("theta")?,
        alpha: number("alpha")?,
        fire_mode,
    };

    let mut weights = Vec::with_capacity(dim * classes);
    let mut rows = 0;
    for (number, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(number, "weight row contains a non-number".into()))?;
        if row.len() != classes {
            return Err(bad(number, format!("expected {classes} weights, found {}", row.len())));
        }
        weights.extend(row);
        rows += 1;
    }
    if rows != dim {
        return Err(bad(0, format!("expected {dim} weight rows, found {rows}")));
    }
    Ok(LifLayer::with_weights(dim, classes, weights, config)?)
}

pub fn load(path: &Path) -> Result<LifLayer, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = NeuronConfig {
            fire_mode: FireMode::Ternary,
            theta: 3.5,
            ..NeuronConfig::default()
        };
        let weights = vec![0.1, -1.0 / 3.0, 1e-17, 0.999_999_999_999, -0.0, 0.25];
        let layer = LifLayer::with_weights(3, 2, weights, cfg).unwrap();
        let back = parse(&render(&layer), Path::new("mem")).unwrap();
        assert_eq!(back, layer);
    }

    #[test]
    fn short_row_is_reported() {
        let layer = LifLayer::with_weights(2, 2, vec![0.0; 4], NeuronConfig::default()).unwrap();
        let text = render(&layer).replace("0 0\n0 0\n", "0 0\n0\n");
        let err = parse(&text, Path::new("ck.txt")).unwrap_err().to_string();
        assert!(err.contains("ck.txt") && err.contains("expected 2 weights"), "{err}");
    }
}
