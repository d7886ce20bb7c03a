//! Network assembly: encoder + spiking backbone + LIAF head, with optional
//! pruning stages, rate-coded loss, and MAC accounting.
//!
//! Layers process the whole timestep sequence before the next layer runs
//! (the network is feedforward, so this is equivalent to stepping time in
//! the outer loop) — the pruning mechanism needs a layer's full `(T, ...)`
//! feature sequence to score frames. When a frame is pruned, the layer's
//! synaptic work for that timestep is skipped entirely; membrane leak still
//! applies.

mod adam;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamHyper, TrainState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC};
pub use train::{evaluate, prune_statistics, train_epoch, EvalReport, KeepStat, SampleDecisions};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Gradients, Result, Tape, Tensor, TensorError, Var};
use crate::events::FrameSequence;
use crate::neuron::{init_state, liaf_step_var, lif_step_var, NeuronParams};
use crate::razor::{razor_forward_var, BankVars, EmbeddingBank, PruneDecision};
use crate::Mode;

/// One backbone stage: a synaptic operation followed by neuron dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Pool {
        size: usize,
    },
    Dense {
        width: usize,
    },
}

/// Which layers emit analog (LIAF) outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiafMode {
    /// LIF everywhere except the output head.
    LastOnly,
    /// Every layer is LIAF.
    All,
}

impl std::str::FromStr for LiafMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "last_only" => Ok(LiafMode::LastOnly),
            "all" => Ok(LiafMode::All),
            other => Err(format!("unknown liaf mode `{other}` (expected last_only|all)")),
        }
    }
}

/// Which layers receive a pruning stage when none are listed explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RazorPlacement {
    /// Every backbone layer except the encoder (the first layer).
    BackboneOnly,
    /// Every backbone layer including the encoder.
    AllLayers,
}

impl std::str::FromStr for RazorPlacement {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "backbone_only" => Ok(RazorPlacement::BackboneOnly),
            "all" => Ok(RazorPlacement::AllLayers),
            other => Err(format!(
                "unknown razor placement `{other}` (expected backbone_only|all)"
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NetworkConfig {
    /// Per-frame input shape `(C, H, W)`.
    pub input: (usize, usize, usize),
    pub t_steps: usize,
    pub num_classes: usize,
    /// Hidden stages; a dense head to `num_classes` is always appended.
    pub layers: Vec<LayerSpec>,
    pub neuron: NeuronParams,
    pub liaf_mode: LiafMode,
    pub razor_enabled: bool,
    pub razor_placement: RazorPlacement,
    /// Explicit hidden-layer indices to guard; overrides the placement
    /// default. The encoder is still forced off under `BackboneOnly`.
    pub razor_layers: Option<Vec<usize>>,
    /// Temporal embeddings per pruning stage.
    pub embedding_count: usize,
    /// Odd length of the weighting module's temporal kernel.
    pub weighting_kernel_size: usize,
    /// Prune threshold on min-max-normalized scores.
    pub s_th: f32,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input: (2, 16, 16),
            t_steps: 16,
            num_classes: 2,
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
            neuron: NeuronParams::default(),
            liaf_mode: LiafMode::LastOnly,
            razor_enabled: true,
            razor_placement: RazorPlacement::BackboneOnly,
            razor_layers: None,
            embedding_count: 4,
            weighting_kernel_size: 3,
            s_th: 0.4,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
enum PlannedOp {
    Conv {
        kernel_shape: Vec<usize>,
        stride: usize,
        padding: usize,
    },
    Pool {
        size: usize,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
}

/// Resolved shape and cost information for one stage.
#[derive(Clone, Debug)]
pub struct LayerPlan {
    op: PlannedOp,
    out_shape: Vec<usize>,
    razor: bool,
    liaf: bool,
    macs_per_step: u64,
}

impl LayerPlan {
    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn razor_guarded(&self) -> bool {
        self.razor
    }

    /// Synaptic multiply-accumulates for one executed timestep.
    pub fn macs_per_step(&self) -> u64 {
        self.macs_per_step
    }
}

/// A validated network: configuration plus the per-layer shape plan.
/// Construction fails on any config or shape inconsistency so the forward
/// pass never does.
#[derive(Debug)]
pub struct Network {
    cfg: NetworkConfig,
    plans: Vec<LayerPlan>,
}

/// MAC accounting for one forward pass. Only synaptic work (convolutions
/// and dense products) is counted; the pruning stages' own overhead is
/// excluded so savings read directly against layer cost.
#[derive(Clone, Debug)]
pub struct MacReport {
    pub layers: Vec<LayerMacs>,
}

#[derive(Clone, Copy, Debug)]
pub struct LayerMacs {
    pub layer: usize,
    pub razor_guarded: bool,
    pub per_step: u64,
    pub executed_steps: u64,
}

impl LayerMacs {
    pub fn executed(&self) -> u64 {
        self.per_step * self.executed_steps
    }
}

impl MacReport {
    pub fn total(&self) -> u64 {
        self.layers.iter().map(LayerMacs::executed).sum()
    }

    /// Cost with nothing pruned.
    pub fn full_total(&self, t_steps: usize) -> u64 {
        self.layers
            .iter()
            .map(|l| l.per_step * t_steps as u64)
            .sum()
    }
}

/// Pruning decision made at one guarded layer.
#[derive(Clone, Debug)]
pub struct LayerDecision {
    pub layer: usize,
    pub decision: PruneDecision,
}

/// Everything produced by one forward pass. The tape stays alive so a loss
/// can be appended and differentiated.
pub struct ForwardPass {
    pub tape: Tape,
    pub logits_var: Var,
    /// Temporal mean of the head outputs, shape `(num_classes,)`.
    pub logits_rate: Tensor,
    pub decisions: Vec<LayerDecision>,
    pub macs: MacReport,
    /// Parameter tape handles in name order.
    pub param_vars: Vec<(String, Var)>,
}

impl ForwardPass {
    /// Append the rate-coded loss for `label` to the tape.
    pub fn loss(&mut self, label: usize) -> Result<Var> {
        rate_loss_var(&mut self.tape, self.logits_var, label)
    }

    /// Gradients keyed by parameter name (zeros for untouched parameters).
    pub fn gradients(&self, loss: Var) -> Result<BTreeMap<String, Tensor>> {
        let grads: Gradients = self.tape.backward(loss)?;
        let mut out = BTreeMap::new();
        for (name, var) in &self.param_vars {
            out.insert(name.clone(), grads.for_leaf(&self.tape, *var));
        }
        Ok(out)
    }
}

impl Network {
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.neuron.validate()?;
        if cfg.t_steps == 0 {
            return Err(TensorError::Invalid {
                what: "network config",
                why: "t_steps must be at least 1".into(),
            });
        }
        if cfg.num_classes == 0 {
            return Err(TensorError::Invalid {
                what: "network config",
                why: "num_classes must be at least 1".into(),
            });
        }
        if cfg.embedding_count == 0 {
            return Err(TensorError::Invalid {
                what: "network config",
                why: "embedding_count must be at least 1".into(),
            });
        }
        if cfg.weighting_kernel_size % 2 == 0 || cfg.weighting_kernel_size == 0 {
            return Err(TensorError::Invalid {
                what: "network config",
                why: format!(
                    "weighting_kernel_size must be odd, got {}",
                    cfg.weighting_kernel_size
                ),
            });
        }
        if !(0.0..=1.0).contains(&cfg.s_th) {
            return Err(TensorError::Invalid {
                what: "network config",
                why: format!("s_th must lie in [0, 1], got {}", cfg.s_th),
            });
        }

        let razor_flags = resolve_razor_flags(&cfg)?;
        let mut plans = Vec::new();
        let mut shape = vec![cfg.input.0, cfg.input.1, cfg.input.2];
        let hidden = cfg.layers.len();

        for (i, spec) in cfg.layers.iter().enumerate() {
            let plan = plan_layer(
                *spec,
                &shape,
                razor_flags[i],
                matches!(cfg.liaf_mode, LiafMode::All),
                i,
            )?;
            shape = plan.out_shape.clone();
            plans.push(plan);
        }
        // Output head: dense to num_classes, always LIAF, never guarded.
        let head = plan_layer(
            LayerSpec::Dense {
                width: cfg.num_classes,
            },
            &shape,
            false,
            true,
            hidden,
        )?;
        plans.push(head);

        Ok(Network { cfg, plans })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn layer_plans(&self) -> &[LayerPlan] {
        &self.plans
    }

    /// Razor guard flag per stage (head included, always false there).
    pub fn razor_flags(&self) -> Vec<bool> {
        self.plans.iter().map(|p| p.razor).collect()
    }

    fn weight_name(layer: usize) -> String {
        format!("layer{layer}.weight")
    }

    fn razor_names(layer: usize) -> (String, String) {
        (
            format!("layer{layer}.razor.embeddings"),
            format!("layer{layer}.razor.kernel"),
        )
    }

    /// Fresh parameters drawn deterministically from the config seed.
    pub fn init_params(&self) -> Result<BTreeMap<String, Tensor>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let mut params = BTreeMap::new();
        for (i, plan) in self.plans.iter().enumerate() {
            match &plan.op {
                PlannedOp::Conv { kernel_shape, .. } => {
                    let fan_in: usize = kernel_shape[1] * kernel_shape[2] * kernel_shape[3];
                    let bound = 1.0 / (fan_in as f32).sqrt();
                    params.insert(
                        Self::weight_name(i),
                        Tensor::uniform(kernel_shape, -bound, bound, &mut rng),
                    );
                }
                PlannedOp::Dense { in_dim, out_dim } => {
                    let bound = 1.0 / (*in_dim as f32).sqrt();
                    params.insert(
                        Self::weight_name(i),
                        Tensor::uniform(&[*out_dim, *in_dim], -bound, bound, &mut rng),
                    );
                }
                PlannedOp::Pool { .. } => {}
            }
            if plan.razor {
                let bank = EmbeddingBank::init(
                    self.cfg.embedding_count,
                    self.cfg.t_steps,
                    self.cfg.weighting_kernel_size,
                    &mut rng,
                )?;
                let (emb, ker) = Self::razor_names(i);
                params.insert(emb, bank.embeddings);
                params.insert(ker, bank.weighting_kernel);
            }
        }
        Ok(params)
    }

    /// Check a parameter map against this network's expected names and
    /// shapes, reporting the first offending tensor.
    pub fn check_params(&self, params: &BTreeMap<String, Tensor>) -> Result<()> {
        let template = self.init_params()?;
        for (name, expect) in &template {
            match params.get(name) {
                None => {
                    return Err(TensorError::Invalid {
                        what: "parameters",
                        why: format!("missing tensor `{name}`"),
                    })
                }
                Some(t) if t.shape() != expect.shape() => {
                    return Err(TensorError::Invalid {
                        what: "parameters",
                        why: format!(
                            "tensor `{name}` has shape {:?}, expected {:?}",
                            t.shape(),
                            expect.shape()
                        ),
                    })
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = params.keys().find(|k| !template.contains_key(*k)) {
            return Err(TensorError::Invalid {
                what: "parameters",
                why: format!("unexpected tensor `{extra}`"),
            });
        }
        Ok(())
    }

    /// One forward pass over a single sample.
    pub fn forward(
        &self,
        params: &BTreeMap<String, Tensor>,
        frames: &FrameSequence,
        mode: Mode,
    ) -> Result<ForwardPass> {
        let expect = [
            self.cfg.t_steps,
            self.cfg.input.0,
            self.cfg.input.1,
            self.cfg.input.2,
        ];
        if frames.data.shape() != expect {
            return Err(TensorError::ShapeMismatch {
                op: "network input",
                lhs: frames.data.shape().to_vec(),
                rhs: expect.to_vec(),
            });
        }

        let mut tape = Tape::new();
        let requires_grad = mode == Mode::Train;
        let mut param_vars = Vec::with_capacity(params.len());
        let mut var_by_name = BTreeMap::new();
        for (name, tensor) in params {
            let var = tape.leaf(tensor.clone(), requires_grad)?;
            param_vars.push((name.clone(), var));
            var_by_name.insert(name.clone(), var);
        }

        let t_steps = self.cfg.t_steps;
        let mut seq = tape.constant(frames.data.clone())?;
        let mut decisions = Vec::new();
        let mut mac_layers = Vec::with_capacity(self.plans.len());

        for (i, plan) in self.plans.iter().enumerate() {
            let mut keep: Option<Vec<f32>> = None;
            if plan.razor && self.cfg.razor_enabled {
                let (emb_name, ker_name) = Self::razor_names(i);
                let bank = BankVars {
                    embeddings: var_by_name[&emb_name],
                    weighting_kernel: var_by_name[&ker_name],
                };
                let out = razor_forward_var(&mut tape, seq, &bank, self.cfg.s_th, mode)?;
                seq = out.out;
                keep = Some(out.decision.keep_mask.data().to_vec());
                decisions.push(LayerDecision {
                    layer: i,
                    decision: out.decision,
                });
            }

            let mut state = init_state(&mut tape, &plan.out_shape)?;
            let mut outs = Vec::with_capacity(t_steps);
            let mut executed_steps = 0u64;
            for t in 0..t_steps {
                let pruned = keep.as_ref().is_some_and(|k| k[t] == 0.0);
                let a = if pruned {
                    tape.constant(Tensor::zeros(&plan.out_shape))?
                } else {
                    executed_steps += 1;
                    let x_t = tape.index_axis0(seq, t)?;
                    self.synaptic_op(&mut tape, i, plan, x_t, &var_by_name)?
                };
                let (next, out) = if plan.liaf {
                    liaf_step_var(&mut tape, &state, a, &self.cfg.neuron)?
                } else {
                    lif_step_var(&mut tape, &state, a, &self.cfg.neuron)?
                };
                state = next;
                outs.push(out);
            }
            seq = tape.stack(&outs)?;
            mac_layers.push(LayerMacs {
                layer: i,
                razor_guarded: plan.razor && self.cfg.razor_enabled,
                per_step: plan.macs_per_step,
                executed_steps,
            });
        }

        let logits_var = tape.mean_axis0(seq)?;
        let logits_rate = tape.value(logits_var).clone();
        Ok(ForwardPass {
            tape,
            logits_var,
            logits_rate,
            decisions,
            macs: MacReport { layers: mac_layers },
            param_vars,
        })
    }

    fn synaptic_op(
        &self,
        tape: &mut Tape,
        layer: usize,
        plan: &LayerPlan,
        x_t: Var,
        vars: &BTreeMap<String, Var>,
    ) -> Result<Var> {
        match &plan.op {
            PlannedOp::Conv {
                stride, padding, ..
            } => {
                let w = vars[&Self::weight_name(layer)];
                tape.conv2d(x_t, w, *stride, *padding)
            }
            PlannedOp::Pool { size } => tape.avg_pool2d(x_t, *size),
            PlannedOp::Dense { in_dim, out_dim } => {
                let w = vars[&Self::weight_name(layer)];
                let col = tape.reshape(x_t, &[*in_dim, 1])?;
                let prod = tape.matmul(w, col)?;
                tape.reshape(prod, &[*out_dim])
            }
        }
    }
}

fn resolve_razor_flags(cfg: &NetworkConfig) -> Result<Vec<bool>> {
    let hidden = cfg.layers.len();
    if !cfg.razor_enabled {
        return Ok(vec![false; hidden]);
    }
    let mut flags = match &cfg.razor_layers {
        Some(indices) => {
            let mut flags = vec![false; hidden];
            for &i in indices {
                if i >= hidden {
                    return Err(TensorError::Invalid {
                        what: "razor_layers",
                        why: format!("index {i} out of range for {hidden} hidden layers"),
                    });
                }
                flags[i] = true;
            }
            flags
        }
        None => vec![true; hidden],
    };
    if matches!(cfg.razor_placement, RazorPlacement::BackboneOnly) {
        if let Some(first) = flags.first_mut() {
            *first = false;
        }
    }
    Ok(flags)
}

fn plan_layer(
    spec: LayerSpec,
    in_shape: &[usize],
    razor: bool,
    liaf: bool,
    layer: usize,
) -> Result<LayerPlan> {
    match spec {
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            if in_shape.len() != 3 {
                return Err(TensorError::Invalid {
                    what: "layer config",
                    why: format!(
                        "layer {layer}: conv needs a (C, H, W) input, got {in_shape:?}"
                    ),
                });
            }
            let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            if stride == 0 || kernel == 0 || out_channels == 0 {
                return Err(TensorError::Invalid {
                    what: "layer config",
                    why: format!("layer {layer}: conv parameters must be positive"),
                });
            }
            if h + 2 * padding < kernel || w + 2 * padding < kernel {
                return Err(TensorError::Invalid {
                    what: "layer config",
                    why: format!(
                        "layer {layer}: kernel {kernel} larger than padded input {h}x{w}"
                    ),
                });
            }
            let oh = (h + 2 * padding - kernel) / stride + 1;
            let ow = (w + 2 * padding - kernel) / stride + 1;
            let macs = (out_channels * oh * ow * c * kernel * kernel) as u64;
            Ok(LayerPlan {
                op: PlannedOp::Conv {
                    kernel_shape: vec![out_channels, c, kernel, kernel],
                    stride,
                    padding,
                },
                out_shape: vec![out_channels, oh, ow],
                razor,
                liaf,
                macs_per_step: macs,
            })
        }
        LayerSpec::Pool { size } => {
            if in_shape.len() != 3 {
                return Err(TensorError::Invalid {
                    what: "layer config",
                    why: format!(
                        "layer {layer}: pool needs a (C, H, W) input, got {in_shape:?}"
                    ),
                });
            }
            let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
            if size == 0 || h < size || w < size {
                return Err(TensorError::Invalid {
                    what: "layer config",
                    why: format!("layer {layer}: pool size {size} incompatible with {h}x{w}"),
                });
            }
            Ok(LayerPlan {
                op: PlannedOp::Pool { size },
                out_shape: vec![c, h / size, w / size],
                razor,
                liaf,
                macs_per_step: 0,
            })
        }
        LayerSpec::Dense { width } => {
            if width == 0 {
                return Err(TensorError::Invalid {
                    what: "layer config",
                    why: format!("layer {layer}: dense width must be positive"),
                });
            }
            let in_dim: usize = in_shape.iter().product();
            Ok(LayerPlan {
                op: PlannedOp::Dense {
                    in_dim,
                    out_dim: width,
                },
                out_shape: vec![width],
                razor,
                liaf,
                macs_per_step: (width * in_dim) as u64,
            })
        }
    }
}

/// Rate-coded loss on a tape: mean squared error between the temporal-mean
/// logits and the one-hot target.
pub fn rate_loss_var(tape: &mut Tape, logits_rate: Var, label: usize) -> Result<Var> {
    let n = tape.value(logits_rate).len();
    if label >= n {
        return Err(TensorError::Invalid {
            what: "label",
            why: format!("class index {label} out of range for {n} classes"),
        });
    }
    let mut target = Tensor::zeros(&[n]);
    target.data_mut()[label] = 1.0;
    let tv = tape.constant(target)?;
    let diff = tape.sub(logits_rate, tv)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq)?;
    tape.scale(total, 1.0 / n as f32)
}

/// Plain-value rate-coded loss.
pub fn rate_loss(logits_rate: &Tensor, label: usize) -> Result<f32> {
    let mut tape = Tape::new();
    let lv = tape.constant(logits_rate.clone())?;
    let loss = rate_loss_var(&mut tape, lv, label)?;
    tape.value(loss).scalar_value()
}
