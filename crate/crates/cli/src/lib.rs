//! Command implementations behind the `spiking-gcn` binary.
//!
//! Every command first writes its fully resolved [`RunConfig`] as a JSON
//! record, then one JSON record per result line. `train` additionally writes
//! `config.json`, `split.txt`, `metrics.jsonl` and `checkpoint.txt` into the
//! output directory; replaying the saved `config.json` reproduces them
//! byte-for-byte.

pub mod checkpoint;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use spiking_gcn::bounds::audit_model;
use spiking_gcn::dataset::{load_content_cites, make_split, scale_features, Dataset, FeatureScaling, SplitMode, SplitSpec};
use spiking_gcn::energy::{count_inference, count_linear_reference, estimate_energy, format_ops, format_sci, OpCounter, PlatformSpec};
use spiking_gcn::graph::{normalize, propagate, PropagatedFeatures};
use spiking_gcn::neuron::{FireMode, LifLayer, NeuronConfig};
use spiking_gcn::train::{evaluate, train_on_features, OptimizerKind, TrainConfig, TrainReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spiking_gcn::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid config: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Checkpoint { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_content: Option<PathBuf>,
    pub dataset_cites: Option<PathBuf>,
    pub split: SplitMode,
    pub split_file: Option<PathBuf>,
    pub seed: u64,
    pub k: usize,
    pub features: FeatureScaling,
    pub time_steps: usize,
    pub tau_m: f64,
    pub v_th: f64,
    pub v_reset: f64,
    pub theta: f64,
    pub alpha: f64,
    pub fire_mode: FireMode,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub optimizer: OptimizerKind,
    pub l2: f64,
    pub clip: f64,
    pub init_scale: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let neuron = NeuronConfig::default();
        let train = TrainConfig::default();
        Self {
            dataset_content: None,
            dataset_cites: None,
            split: SplitMode::Official,
            split_file: None,
            seed: train.seed,
            k: 2,
            features: FeatureScaling::default(),
            time_steps: train.t_steps,
            tau_m: neuron.tau_m,
            v_th: neuron.v_th,
            v_reset: neuron.v_reset,
            theta: neuron.theta,
            alpha: neuron.alpha,
            fire_mode: neuron.fire_mode,
            lr: train.learning_rate,
            epochs: train.epochs,
            batch_size: train.batch_size,
            optimizer: train.optimizer,
            l2: train.l2_coeff,
            clip: train.clip_bound,
            init_scale: train.init_scale,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn neuron_config(&self) -> NeuronConfig {
        NeuronConfig {
            tau_m: self.tau_m,
            v_th: self.v_th,
            v_reset: self.v_reset,
            theta: self.theta,
            alpha: self.alpha,
            fire_mode: self.fire_mode,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            t_steps: self.time_steps,
            l2_coeff: self.l2,
            clip_bound: self.clip,
            seed: self.seed,
            optimizer: self.optimizer,
            init_scale: self.init_scale,
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    fn dataset_paths(&self) -> CliResult<(&Path, &Path)> {
        match (&self.dataset_content, &self.dataset_cites) {
            (Some(content), Some(cites)) => Ok((content, cites)),
            (None, _) => Err(CliError::Usage("--dataset-content is required".into())),
            (_, None) => Err(CliError::Usage("--dataset-cites is required".into())),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spiking-gcn", version, about = "Spiking graph convolution for node classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, metrics, split and config.
    Train(RunArgs),
    /// Test accuracy and confusion counts of a checkpoint.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Operation counts and energy estimates.
    Energy(EnergyArgs),
    /// Concentration bounds and Monte Carlo tails for one node.
    Bounds {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        node: usize,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
}

/// Run flags. Unset flags fall back to `--config`, then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Saved `config.json` to start from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset_content: Option<PathBuf>,
    #[arg(long)]
    pub dataset_cites: Option<PathBuf>,
    /// `official` (20 per class, 500 val, 1000 test) or `ratio` (8:2, 20% of train as val).
    #[arg(long)]
    pub split: Option<SplitMode>,
    /// Use a saved split instead of sampling one.
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Propagation depth K.
    #[arg(long)]
    pub k: Option<usize>,
    /// `row-normalize` or `clamp-only`.
    #[arg(long)]
    pub features: Option<FeatureScaling>,
    #[arg(long)]
    pub time_steps: Option<usize>,
    #[arg(long)]
    pub tau_m: Option<f64>,
    #[arg(long)]
    pub v_th: Option<f64>,
    #[arg(long)]
    pub v_reset: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `binary` or `ternary`.
    #[arg(long)]
    pub fire_mode: Option<FireMode>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size; omit for full-batch steps.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `adam` or `sgd`.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { cfg.$target = v; })*
            };
        }
        take!(
            split => split, seed => seed, k => k, features => features,
            time_steps => time_steps, tau_m => tau_m, v_th => v_th, v_reset => v_reset,
            theta => theta, alpha => alpha, fire_mode => fire_mode, lr => lr,
            epochs => epochs, optimizer => optimizer, l2 => l2, clip => clip,
            init_scale => init_scale, out_dir => out_dir,
        );
        if self.dataset_content.is_some() {
            cfg.dataset_content = self.dataset_content.clone();
        }
        if self.dataset_cites.is_some() {
            cfg.dataset_cites = self.dataset_cites.clone();
        }
        if self.split_file.is_some() {
            cfg.split_file = self.split_file.clone();
        }
        if self.batch_size.is_some() {
            cfg.batch_size = self.batch_size;
        }
        cfg.neuron_config().validate()?;
        cfg.train_config().validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Trained checkpoint; inference over the test split supplies the spike count.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Use this spike count instead of running inference.
    #[arg(long)]
    pub spikes: Option<f64>,
    /// Use this FLOP count for the GPU estimate.
    #[arg(long)]
    pub flops: Option<f64>,
    /// Dense reference layer as `DxC`; defaults to the checkpoint's shape.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, default_value_t = 280.0)]
    pub gpu_watts: f64,
    #[arg(long, default_value_t = 16_310.0)]
    pub gpu_gflops: f64,
    #[arg(long, default_value_t = 3.7)]
    pub spike_pj: f64,
    #[arg(long, default_value_t = 1.8)]
    pub supply_volts: f64,
}

fn emit(out: &mut dyn Write, record: serde_json::Value) -> CliResult<()> {
    writeln!(out, "{record}")?;
    Ok(())
}

fn echo_config(out: &mut dyn Write, cfg: &RunConfig) -> CliResult<()> {
    emit(out, json!({ "record": "config", "config": cfg }))
}

/// Dataset after feature scaling, its split and the propagated features.
pub struct Prepared {
    pub dataset: Dataset,
    pub split: SplitSpec,
    pub features: PropagatedFeatures,
}

pub fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let (content, cites) = cfg.dataset_paths()?;
    let raw = load_content_cites(content, cites)?;
    let dataset = scale_features(&raw, cfg.features)?;
    let split = match &cfg.split_file {
        Some(path) => {
            let split = SplitSpec::load(path)?;
            split.validate(dataset.n_nodes())?;
            split
        }
        None => make_split(&dataset, cfg.split, cfg.seed)?,
    };
    let features = propagate(&normalize(&dataset.graph), &dataset.features, cfg.k)?;
    Ok(Prepared {
        dataset,
        split,
        features,
    })
}

fn check_shape(layer: &LifLayer, prepared: &Prepared, path: &Path) -> CliResult<()> {
    if layer.dim() != prepared.features.dim() || layer.n_classes() != prepared.dataset.n_classes {
        return Err(CliError::Checkpoint {
            path: path.to_path_buf(),
            line: 0,
            message: format!(
                "checkpoint is {}x{} but the dataset has {} features and {} classes",
                layer.dim(),
                layer.n_classes(),
                prepared.features.dim(),
                prepared.dataset.n_classes
            ),
        });
    }
    Ok(())
}

pub fn metrics_jsonl(report: &TrainReport) -> String {
    let mut text = String::new();
    for record in &report.epochs {
        let line = json!({
            "record": "epoch",
            "epoch": record.epoch,
            "loss": record.loss,
            "val_acc": record.val_acc,
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    let summary = json!({
        "record": "summary",
        "best_epoch": report.best_epoch,
        "best_val_acc": report.best_val_acc,
        "test_acc": report.test_acc,
    });
    text.push_str(&summary.to_string());
    text.push('\n');
    text
}

/// Files written by a training run, removed again if a later step fails.
struct Artifacts {
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn write(&mut self, path: PathBuf, contents: &str) -> CliResult<()> {
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn discard(self) {
        for path in self.written {
            let _ = fs::remove_file(path);
        }
    }
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<TrainReport> {
    echo_config(out, cfg)?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    let mut artifacts = Artifacts { written: Vec::new() };
    let result = train_and_write(cfg, out, &mut artifacts);
    if result.is_err() {
        artifacts.discard();
    }
    result
}

fn train_and_write(cfg: &RunConfig, out: &mut dyn Write, artifacts: &mut Artifacts) -> CliResult<TrainReport> {
    let dir = &cfg.out_dir;
    artifacts.write(dir.join("config.json"), &cfg.to_json())?;
    let prepared = prepare(cfg)?;
    artifacts.write(dir.join("split.txt"), &prepared.split.to_text())?;
    let report = train_on_features(
        &prepared.features,
        &prepared.dataset.labels,
        prepared.dataset.n_classes,
        &prepared.split,
        &cfg.train_config(),
        &cfg.neuron_config(),
    )?;
    let metrics = metrics_jsonl(&report);
    artifacts.write(dir.join("metrics.jsonl"), &metrics)?;
    artifacts.write(dir.join("checkpoint.txt"), &checkpoint::render(&report.best_layer))?;
    out.write_all(metrics.as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub n_nodes: usize,
    pub confusion: Vec<Vec<usize>>,
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint_path: &Path, out: &mut dyn Write) -> CliResult<EvalSummary> {
    echo_config(out, cfg)?;
    let layer = checkpoint::load(checkpoint_path)?;
    let prepared = prepare(cfg)?;
    check_shape(&layer, &prepared, checkpoint_path)?;
    let eval = evaluate(
        &layer,
        &prepared.features,
        &prepared.dataset.labels,
        &prepared.split.test_idx,
        cfg.time_steps,
        cfg.seed,
    )?;
    let summary = EvalSummary {
        accuracy: eval.accuracy,
        n_nodes: prepared.split.test_idx.len(),
        confusion: eval.confusion,
    };
    emit(out, json!({ "record": "eval", "eval": summary }))?;
    Ok(summary)
}

fn parse_reference(text: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("--reference expects DxC, got {text:?}"));
    let (d, c) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((d.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySummary {
    pub ops: OpCounter,
    pub sops_per_node: f64,
    pub macs_per_node: u64,
    pub spike_events: f64,
    pub flop_events: f64,
    pub neuromorphic_joules: f64,
    pub gpu_joules: f64,
}

/// Without `--flops`, the GPU runs the dense reference on the same nodes at
/// two FLOPs per MAC.
pub fn cmd_energy(args: &EnergyArgs, out: &mut dyn Write) -> CliResult<EnergySummary> {
    let cfg = args.run.resolve()?;
    echo_config(out, &cfg)?;
    let mut ops = OpCounter::default();
    let mut reference = args.reference.as_deref().map(parse_reference).transpose()?;
    if let Some(path) = &args.checkpoint {
        let layer = checkpoint::load(path)?;
        let prepared = prepare(&cfg)?;
        check_shape(&layer, &prepared, path)?;
        ops = count_inference(&layer, &prepared.features, &prepared.split.test_idx, cfg.time_steps, cfg.seed)?;
        reference.get_or_insert((layer.dim(), layer.n_classes()));
    } else if args.spikes.is_none() {
        return Err(CliError::Usage("energy needs --checkpoint or --spikes".into()));
    }
    let macs_per_node = reference.map_or(0, |(d, c)| count_linear_reference(d, c));
    let spike_events = args.spikes.unwrap_or(ops.spikes as f64);
    let flop_events = args
        .flops
        .unwrap_or(2.0 * macs_per_node as f64 * ops.nodes_evaluated as f64);

    emit(
        out,
        json!({
            "record": "ops",
            "nodes": ops.nodes_evaluated,
            "spikes": ops.spikes,
            "sops": ops.sops,
            "sops_per_node": format_ops(ops.sops_per_node()),
            "macs_per_node": format_ops(macs_per_node as f64),
        }),
    )?;
    let chip = estimate_energy(
        PlatformSpec::Neuromorphic {
            energy_per_spike_pj: args.spike_pj,
            supply_volts: args.supply_volts,
        },
        spike_events,
    )?;
    let gpu = estimate_energy(
        PlatformSpec::Gpu {
            power_watts: args.gpu_watts,
            gflops: args.gpu_gflops,
        },
        flop_events,
    )?;
    for report in [&chip, &gpu] {
        emit(
            out,
            json!({
                "record": "energy",
                "platform": report.platform,
                "events": format_sci(report.total_events),
                "joules": format_sci(report.joules),
            }),
        )?;
    }
    Ok(EnergySummary {
        sops_per_node: ops.sops_per_node(),
        ops,
        macs_per_node,
        spike_events,
        flop_events,
        neuromorphic_joules: chip.joules,
        gpu_joules: gpu.joules,
    })
}

pub fn cmd_bounds(
    cfg: &RunConfig,
    checkpoint_path: &Path,
    node: usize,
    epsilon: f64,
    trials: usize,
    out: &mut dyn Write,
) -> CliResult<spiking_gcn::bounds::ModelAudit> {
    echo_config(out, cfg)?;
    let layer = checkpoint::load(checkpoint_path)?;
    let prepared = prepare(cfg)?;
    check_shape(&layer, &prepared, checkpoint_path)?;
    let audit = audit_model(&layer, &prepared.features, node, epsilon, trials, cfg.seed)?;
    for class in &audit.classes {
        emit(out, json!({ "record": "bound", "node": node, "class": class }))?;
    }
    emit(
        out,
        json!({ "record": "bound_summary", "node": node, "worst_failure_prob": audit.worst_failure_prob }),
    )?;
    Ok(audit)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Train(args) => cmd_train(&args.resolve()?, out).map(drop),
        Command::Eval { run, checkpoint } => cmd_eval(&run.resolve()?, &checkpoint, out).map(drop),
        Command::Energy(args) => cmd_energy(&args, out).map(drop),
        Command::Bounds {
            run,
            checkpoint,
            node,
            epsilon,
            trials,
        } => cmd_bounds(&run.resolve()?, &checkpoint, node, epsilon, trials, out).map(drop),
    }
}
