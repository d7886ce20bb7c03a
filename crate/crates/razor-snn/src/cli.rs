//! Command-line entry points and run configuration.
//!
//! Configuration is plain `key = value` lines with `#` comments. Every key
//! has a default; a config file overrides defaults and command-line flags
//! override the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::events::{load_dataset, write_synthetic_dataset, SynthSpec};
use crate::network::{
    evaluate, load_checkpoint, prune_statistics, save_checkpoint, train_epoch, AdamHyper,
    LayerSpec, LiafMode, Network, NetworkConfig, RazorPlacement, TrainState,
};
use crate::neuron::{NeuronParams, ResetMode};
use crate::Mode;

#[derive(Debug, Error)]
pub enum CliError {
    /// Usage or configuration problem; exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Data or format problem; exit code 2.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

/// Resolved run configuration. Precedence: defaults, then config file, then
/// flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub adam_eps: f32,
    pub seed: u64,
    pub s_th: f32,
    pub mode: Mode,
    pub dt_us: u64,
    pub t_steps: usize,
    pub num_classes: usize,
    pub input_channels: usize,
    pub height: usize,
    pub width: usize,
    pub v_th: f32,
    pub leak: f32,
    pub reset_mode: ResetMode,
    pub tau: f32,
    pub surrogate_width: f32,
    pub liaf_mode: LiafMode,
    pub razor_enabled: bool,
    pub razor_placement: RazorPlacement,
    pub razor_layers: Option<Vec<usize>>,
    pub embedding_count: usize,
    pub weighting_kernel: usize,
    pub layers: Vec<LayerSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
            epochs: 30,
            batch_size: 16,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
            s_th: 0.4,
            mode: Mode::Infer,
            dt_us: 1_000,
            t_steps: 16,
            num_classes: 2,
            input_channels: 2,
            height: 16,
            width: 16,
            v_th: 0.3,
            leak: 0.3,
            reset_mode: ResetMode::HardReset,
            tau: 0.3,
            surrogate_width: 1.0,
            liaf_mode: LiafMode::LastOnly,
            razor_enabled: true,
            razor_placement: RazorPlacement::BackboneOnly,
            razor_layers: None,
            embedding_count: 4,
            weighting_kernel: 3,
            layers: vec![
                LayerSpec::Conv {
                    out_channels: 8,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::Conv {
                    out_channels: 16,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                },
                LayerSpec::Dense { width: 32 },
            ],
        }
    }
}

/// Every recognized config key, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "data_dir",
    "out_dir",
    "epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "seed",
    "s_th",
    "mode",
    "dt_us",
    "t_steps",
    "num_classes",
    "input_channels",
    "height",
    "width",
    "v_th",
    "leak",
    "reset_mode",
    "tau",
    "surrogate_width",
    "liaf_mode",
    "razor_enabled",
    "razor_placement",
    "razor_layers",
    "embedding_count",
    "weighting_kernel",
    "layers",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("config key `{key}`: bad value `{value}`: {e}")))
}

fn parse_layer_list(value: &str) -> CliResult<Vec<LayerSpec>> {
    let mut layers = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let fields: Vec<&str> = part.split(':').collect();
        let spec = match fields[0] {
            "conv" => {
                if fields.len() < 4 || fields.len() > 5 {
                    return Err(CliError::Usage(format!(
                        "layer `{part}`: expected conv:OUT:KERNEL:STRIDE[:PAD]"
                    )));
                }
                let out_channels = parse_value("layers", fields[1])?;
                let kernel: usize = parse_value("layers", fields[2])?;
                let stride = parse_value("layers", fields[3])?;
                let padding = if fields.len() == 5 {
                    parse_value("layers", fields[4])?
                } else {
                    kernel / 2
                };
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                }
            }
            "pool" => {
                if fields.len() != 2 {
                    return Err(CliError::Usage(format!(
                        "layer `{part}`: expected pool:SIZE"
                    )));
                }
                LayerSpec::Pool {
                    size: parse_value("layers", fields[1])?,
                }
            }
            "dense" => {
                if fields.len() != 2 {
                    return Err(CliError::Usage(format!(
                        "layer `{part}`: expected dense:WIDTH"
                    )));
                }
                LayerSpec::Dense {
                    width: parse_value("layers", fields[1])?,
                }
            }
            other => {
                return Err(CliError::Usage(format!(
                    "layer `{part}`: unknown kind `{other}` (expected conv|pool|dense)"
                )))
            }
        };
        layers.push(spec);
    }
    if layers.is_empty() {
        return Err(CliError::Usage("config key `layers`: list is empty".into()));
    }
    Ok(layers)
}

fn layer_list_string(layers: &[LayerSpec]) -> String {
    layers
        .iter()
        .map(|l| match l {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => format!("conv:{out_channels}:{kernel}:{stride}:{padding}"),
            LayerSpec::Pool { size } => format!("pool:{size}"),
            LayerSpec::Dense { width } => format!("dense:{width}"),
        })
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "beta1" => self.beta1 = parse_value(key, value)?,
            "beta2" => self.beta2 = parse_value(key, value)?,
            "adam_eps" => self.adam_eps = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "s_th" => self.s_th = parse_value(key, value)?,
            "mode" => self.mode = parse_value(key, value)?,
            "dt_us" => self.dt_us = parse_value(key, value)?,
            "t_steps" => self.t_steps = parse_value(key, value)?,
            "num_classes" => self.num_classes = parse_value(key, value)?,
            "input_channels" => self.input_channels = parse_value(key, value)?,
            "height" => self.height = parse_value(key, value)?,
            "width" => self.width = parse_value(key, value)?,
            "v_th" => self.v_th = parse_value(key, value)?,
            "leak" => self.leak = parse_value(key, value)?,
            "reset_mode" => self.reset_mode = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "surrogate_width" => self.surrogate_width = parse_value(key, value)?,
            "liaf_mode" => self.liaf_mode = parse_value(key, value)?,
            "razor_enabled" => self.razor_enabled = parse_value(key, value)?,
            "razor_placement" => self.razor_placement = parse_value(key, value)?,
            "razor_layers" => {
                if value.trim().is_empty() || value == "auto" {
                    self.razor_layers = None;
                } else {
                    let mut indices = Vec::new();
                    for part in value.split(',') {
                        indices.push(parse_value(key, part.trim())?);
                    }
                    self.razor_layers = Some(indices);
                }
            }
            "embedding_count" => self.embedding_count = parse_value(key, value)?,
            "weighting_kernel" => self.weighting_kernel = parse_value(key, value)?,
            "layers" => self.layers = parse_layer_list(value)?,
            other => {
                return Err(CliError::Usage(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    /// Canonical string form of a key's current value.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "data_dir" => self.data_dir.display().to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "adam_eps" => self.adam_eps.to_string(),
            "seed" => self.seed.to_string(),
            "s_th" => self.s_th.to_string(),
            "mode" => self.mode.to_string(),
            "dt_us" => self.dt_us.to_string(),
            "t_steps" => self.t_steps.to_string(),
            "num_classes" => self.num_classes.to_string(),
            "input_channels" => self.input_channels.to_string(),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "v_th" => self.v_th.to_string(),
            "leak" => self.leak.to_string(),
            "reset_mode" => match self.reset_mode {
                ResetMode::HardReset => "hard_reset".into(),
                ResetMode::LiteralH => "literal_h".into(),
            },
            "tau" => self.tau.to_string(),
            "surrogate_width" => self.surrogate_width.to_string(),
            "liaf_mode" => match self.liaf_mode {
                LiafMode::LastOnly => "last_only".into(),
                LiafMode::All => "all".into(),
            },
            "razor_enabled" => self.razor_enabled.to_string(),
            "razor_placement" => match self.razor_placement {
                RazorPlacement::BackboneOnly => "backbone_only".into(),
                RazorPlacement::AllLayers => "all".into(),
            },
            "razor_layers" => match &self.razor_layers {
                None => "auto".into(),
                Some(v) => v
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            },
            "embedding_count" => self.embedding_count.to_string(),
            "weighting_kernel" => self.weighting_kernel.to_string(),
            "layers" => layer_list_string(&self.layers),
            _ => return None,
        })
    }

    /// Parse a config file into `(key, value)` pairs, citing offending
    /// lines.
    pub fn parse_file(text: &str) -> CliResult<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected `key = value`, got `{line}`",
                    idx + 1
                ))
            })?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(pairs)
    }

    /// Resolve defaults, then an optional config file, then flag overrides.
    pub fn resolve(
        config_path: Option<&Path>,
        overrides: &[(String, String)],
    ) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            for (key, value) in Self::parse_file(&text)? {
                cfg.set(&key, &value)?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            input: (self.input_channels, self.height, self.width),
            t_steps: self.t_steps,
            num_classes: self.num_classes,
            layers: self.layers.clone(),
            neuron: NeuronParams {
                v_th: self.v_th,
                leak: self.leak,
                reset_mode: self.reset_mode,
                tau: self.tau,
                surrogate_width: self.surrogate_width,
            },
            liaf_mode: self.liaf_mode,
            razor_enabled: self.razor_enabled,
            razor_placement: self.razor_placement,
            razor_layers: self.razor_layers.clone(),
            embedding_count: self.embedding_count,
            weighting_kernel_size: self.weighting_kernel,
            s_th: self.s_th,
            seed: self.seed,
        }
    }

    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "razor-snn",
    about = "Spiking neural network engine with temporal frame pruning",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a rotating-bar event dataset.
    Synth {
        /// Output directory for event CSVs and labels.csv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        height: usize,
        #[arg(long, default_value_t = 16)]
        width: usize,
        #[arg(long = "t-steps", default_value_t = 16)]
        t_steps: usize,
        #[arg(long = "samples-per-class", default_value_t = 8)]
        samples_per_class: usize,
        #[arg(long = "events-per-step", default_value_t = 32)]
        events_per_step: usize,
        /// Mean spurious events per window (Poisson).
        #[arg(long = "noise-rate", default_value_t = 0.0)]
        noise_rate: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train a network; writes a checkpoint and a metrics CSV.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory (overrides `data_dir`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long = "s-th")]
        s_th: Option<f32>,
        /// Extra `key=value` overrides, repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Evaluate a checkpoint; prints accuracy, kept fraction, and MACs.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "s-th")]
        s_th: Option<f32>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Per-layer keep histogram over a dataset.
    Stats {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Histogram CSV path.
        #[arg(long, default_value = "stats.csv")]
        out: PathBuf,
        /// Optional per-sample decision CSV (`sample,layer,t,score,keep`).
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(long = "s-th")]
        s_th: Option<f32>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn split_set_overrides(set: &[String]) -> CliResult<Vec<(String, String)>> {
    set.iter()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))
        })
        .collect()
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth {
            out,
            height,
            width,
            t_steps,
            samples_per_class,
            events_per_step,
            noise_rate,
            seed,
        } => cmd_synth(
            &out,
            SynthSpec {
                height,
                width,
                t_steps,
                samples_per_class,
                events_per_step,
                noise_rate,
                seed,
            },
        ),
        Command::Train {
            config,
            data,
            out,
            seed,
            epochs,
            s_th,
            set,
        } => {
            let mut overrides = split_set_overrides(&set)?;
            if let Some(d) = data {
                overrides.push(("data_dir".into(), d.display().to_string()));
            }
            if let Some(o) = out {
                overrides.push(("out_dir".into(), o.display().to_string()));
            }
            if let Some(s) = seed {
                overrides.push(("seed".into(), s.to_string()));
            }
            if let Some(e) = epochs {
                overrides.push(("epochs".into(), e.to_string()));
            }
            if let Some(s) = s_th {
                overrides.push(("s_th".into(), s.to_string()));
            }
            let cfg = RunConfig::resolve(config.as_deref(), &overrides)?;
            cmd_train(&cfg)
        }
        Command::Eval {
            checkpoint,
            data,
            config,
            s_th,
            mode,
            set,
        } => {
            let mut overrides = split_set_overrides(&set)?;
            if let Some(d) = data {
                overrides.push(("data_dir".into(), d.display().to_string()));
            }
            if let Some(s) = s_th {
                overrides.push(("s_th".into(), s.to_string()));
            }
            if let Some(m) = mode {
                overrides.push(("mode".into(), m));
            }
            let cfg = RunConfig::resolve(config.as_deref(), &overrides)?;
            cmd_eval(&checkpoint, &cfg)
        }
        Command::Stats {
            checkpoint,
            data,
            config,
            out,
            decisions,
            s_th,
            set,
        } => {
            let mut overrides = split_set_overrides(&set)?;
            if let Some(d) = data {
                overrides.push(("data_dir".into(), d.display().to_string()));
            }
            if let Some(s) = s_th {
                overrides.push(("s_th".into(), s.to_string()));
            }
            let cfg = RunConfig::resolve(config.as_deref(), &overrides)?;
            cmd_stats(&checkpoint, &out, decisions.as_deref(), &cfg)
        }
    }
}

pub fn cmd_synth(out: &Path, spec: SynthSpec) -> CliResult<()> {
    let names = write_synthetic_dataset(out, &spec).map_err(data)?;
    println!(
        "wrote {} samples ({} per class) to {}",
        names.len(),
        spec.samples_per_class,
        out.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let net = Network::new(cfg.network_config()).map_err(usage)?;
    let samples = load_dataset(&cfg.data_dir, cfg.dt_us, cfg.t_steps).map_err(data)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!(
            "dataset {} holds no samples",
            cfg.data_dir.display()
        )));
    }
    let params = net.init_params().map_err(usage)?;
    let mut state = TrainState::new(params, cfg.seed);
    let hyper = cfg.adam_hyper();

    let mut metrics = String::from("epoch,loss,train_acc\n");
    for epoch in 0..cfg.epochs {
        let loss =
            train_epoch(&net, &mut state, &samples, cfg.batch_size, &hyper, epoch as u64)
                .map_err(data)?;
        let report = evaluate(&net, &state.params, &samples, Mode::Train).map_err(data)?;
        let _ = writeln!(metrics, "{epoch},{loss},{}", report.accuracy);
        println!(
            "epoch {epoch}: loss {loss:.6} train_acc {:.4}",
            report.accuracy
        );
    }

    std::fs::create_dir_all(&cfg.out_dir).map_err(data)?;
    let ckpt_path = cfg.out_dir.join("checkpoint.rzsn");
    save_checkpoint(&ckpt_path, &state.params, state.step).map_err(data)?;
    std::fs::write(cfg.out_dir.join("metrics.csv"), metrics).map_err(data)?;
    println!(
        "saved checkpoint to {} after {} optimizer steps",
        ckpt_path.display(),
        state.step
    );
    Ok(())
}

fn load_checked(checkpoint: &Path, net: &Network) -> CliResult<BTreeMap<String, crate::autograd::Tensor>> {
    let (params, _step) = load_checkpoint(checkpoint).map_err(data)?;
    net.check_params(&params).map_err(data)?;
    Ok(params)
}

pub fn cmd_eval(checkpoint: &Path, cfg: &RunConfig) -> CliResult<()> {
    let net = Network::new(cfg.network_config()).map_err(usage)?;
    let params = load_checked(checkpoint, &net)?;
    let samples = load_dataset(&cfg.data_dir, cfg.dt_us, cfg.t_steps).map_err(data)?;
    let report = evaluate(&net, &params, &samples, cfg.mode).map_err(data)?;
    println!("accuracy,kept_fraction,mac_total");
    println!(
        "{},{},{}",
        report.accuracy, report.kept_fraction, report.mac_total
    );
    Ok(())
}

pub fn cmd_stats(
    checkpoint: &Path,
    out: &Path,
    decisions_out: Option<&Path>,
    cfg: &RunConfig,
) -> CliResult<()> {
    let net = Network::new(cfg.network_config()).map_err(usage)?;
    let params = load_checked(checkpoint, &net)?;
    let samples = load_dataset(&cfg.data_dir, cfg.dt_us, cfg.t_steps).map_err(data)?;
    let report = evaluate(&net, &params, &samples, cfg.mode).map_err(data)?;

    let mut hist = String::from("layer,t,kept,total\n");
    for stat in prune_statistics(&report.decisions) {
        let _ = writeln!(hist, "{},{},{},{}", stat.layer, stat.t, stat.kept, stat.total);
    }
    std::fs::write(out, hist).map_err(data)?;

    if let Some(path) = decisions_out {
        let mut rows = String::from("sample,layer,t,score,keep\n");
        for sample in &report.decisions {
            for layer in &sample.layers {
                let scores = layer.decision.scores.data();
                let keeps = layer.decision.keep_mask.data();
                for (t, (&score, &keep)) in scores.iter().zip(keeps).enumerate() {
                    let _ = writeln!(
                        rows,
                        "{},{},{},{},{}",
                        sample.sample, layer.layer, t, score, keep as u8
                    );
                }
            }
        }
        std::fs::write(path, rows).map_err(data)?;
    }

    println!(
        "kept_fraction {:.4} over {} samples; histogram written to {}",
        report.kept_fraction,
        report.decisions.len(),
        out.display()
    );
    Ok(())
}
