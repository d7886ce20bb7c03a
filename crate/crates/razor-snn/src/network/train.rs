//! Training and evaluation loops.
//!
//! Forward passes over the samples of a batch run in parallel; per-sample
//! gradients are collected in sample order and reduced sequentially, so
//! results are bitwise identical whatever the thread count.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::autograd::{Result, Tensor, TensorError};
use crate::events::Sample;
use crate::network::{adam_step, AdamHyper, LayerDecision, Network, TrainState};
use crate::Mode;

fn sample_context(name: &str, err: TensorError) -> TensorError {
    TensorError::Invalid {
        what: "sample",
        why: format!("{name}: {err}"),
    }
}

fn epoch_seed(run_seed: u64, epoch: u64) -> u64 {
    run_seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One pass over the dataset: shuffle with the run seed, accumulate the
/// mean gradient per batch, apply Adam. Returns the mean per-sample loss.
pub fn train_epoch(
    net: &Network,
    state: &mut TrainState,
    data: &[Sample],
    batch_size: usize,
    hyper: &AdamHyper,
    epoch: u64,
) -> Result<f32> {
    if data.is_empty() {
        return Err(TensorError::Invalid {
            what: "dataset",
            why: "train_epoch needs at least one sample".into(),
        });
    }
    if batch_size == 0 {
        return Err(TensorError::Invalid {
            what: "batch size",
            why: "must be at least 1".into(),
        });
    }

    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed(state.seed, epoch));
    indices.shuffle(&mut rng);

    let mut loss_total = 0.0f64;
    for chunk in indices.chunks(batch_size) {
        let per_sample: Vec<Result<(f64, Vec<Tensor>)>> = chunk
            .par_iter()
            .map(|&idx| {
                let sample = &data[idx];
                let mut pass = net
                    .forward(&state.params, &sample.frames, Mode::Train)
                    .map_err(|e| sample_context(&sample.name, e))?;
                let loss = pass.loss(sample.label)?;
                let loss_value = pass.tape.value(loss).scalar_value()? as f64;
                let grads = pass.tape.backward(loss)?;
                let ordered = pass
                    .param_vars
                    .iter()
                    .map(|(_, var)| grads.for_leaf(&pass.tape, *var))
                    .collect();
                Ok((loss_value, ordered))
            })
            .collect();

        let names: Vec<String> = state.params.keys().cloned().collect();
        let mut summed: Option<Vec<Tensor>> = None;
        for result in per_sample {
            let (loss_value, grads) = result?;
            loss_total += loss_value;
            match &mut summed {
                None => summed = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(grads.iter()) {
                        a.add_assign(g)?;
                    }
                }
            }
        }
        let summed = summed.expect("chunk is non-empty");
        let scale = 1.0 / chunk.len() as f32;
        let mut grad_map = BTreeMap::new();
        for (name, g) in names.into_iter().zip(summed) {
            grad_map.insert(name, g.map(|v| v * scale));
        }
        adam_step(state, &grad_map, hyper)?;
    }

    Ok((loss_total / data.len() as f64) as f32)
}

/// Decisions recorded for one evaluated sample.
#[derive(Clone, Debug)]
pub struct SampleDecisions {
    pub sample: String,
    pub layers: Vec<LayerDecision>,
}

/// Aggregate evaluation result.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Mean of the keep mask over guarded layers, samples, and timesteps;
    /// 1.0 when nothing can be pruned.
    pub kept_fraction: f64,
    pub mac_total: u64,
    /// Per guarded layer: (layer index, MACs per step, executed steps
    /// summed over samples).
    pub guarded_macs: Vec<(usize, u64, u64)>,
    pub decisions: Vec<SampleDecisions>,
}

fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Deterministic evaluation pass: accuracy by argmax of the rate-coded
/// logits, kept fraction, and MAC totals.
pub fn evaluate(
    net: &Network,
    params: &BTreeMap<String, Tensor>,
    data: &[Sample],
    mode: Mode,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(TensorError::Invalid {
            what: "dataset",
            why: "evaluate needs at least one sample".into(),
        });
    }

    struct PerSample {
        correct: bool,
        kept: u64,
        slots: u64,
        macs: u64,
        guarded: Vec<(usize, u64, u64)>,
        decisions: SampleDecisions,
    }

    let results: Vec<Result<PerSample>> = data
        .par_iter()
        .map(|sample| {
            let pass = net
                .forward(params, &sample.frames, mode)
                .map_err(|e| sample_context(&sample.name, e))?;
            let predicted = argmax(pass.logits_rate.data());
            let mut kept = 0u64;
            let mut slots = 0u64;
            for d in &pass.decisions {
                kept += d.decision.kept() as u64;
                slots += d.decision.t_steps() as u64;
            }
            let guarded = pass
                .macs
                .layers
                .iter()
                .filter(|l| l.razor_guarded)
                .map(|l| (l.layer, l.per_step, l.executed_steps))
                .collect();
            Ok(PerSample {
                correct: predicted == sample.label,
                kept,
                slots,
                macs: pass.macs.total(),
                guarded,
                decisions: SampleDecisions {
                    sample: sample.name.clone(),
                    layers: pass.decisions,
                },
            })
        })
        .collect();

    let mut correct = 0usize;
    let mut kept = 0u64;
    let mut slots = 0u64;
    let mut mac_total = 0u64;
    let mut guarded_macs: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    let mut decisions = Vec::with_capacity(data.len());
    for result in results {
        let r = result?;
        correct += r.correct as usize;
        kept += r.kept;
        slots += r.slots;
        mac_total += r.macs;
        for (layer, per_step, executed) in r.guarded {
            let entry = guarded_macs.entry(layer).or_insert((per_step, 0));
            entry.1 += executed;
        }
        decisions.push(r.decisions);
    }

    Ok(EvalReport {
        accuracy: correct as f64 / data.len() as f64,
        kept_fraction: if slots == 0 {
            1.0
        } else {
            kept as f64 / slots as f64
        },
        mac_total,
        guarded_macs: guarded_macs
            .into_iter()
            .map(|(layer, (per_step, executed))| (layer, per_step, executed))
            .collect(),
        decisions,
    })
}

/// Histogram row: how many samples kept timestep `t` at `layer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeepStat {
    pub layer: usize,
    pub t: usize,
    pub kept: usize,
    pub total: usize,
}

/// Per-(layer, timestep) keep counts over a set of evaluated samples.
pub fn prune_statistics(decisions: &[SampleDecisions]) -> Vec<KeepStat> {
    let mut hist: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
    for sample in decisions {
        for layer in &sample.layers {
            for (t, &keep) in layer.decision.keep_mask.data().iter().enumerate() {
                let entry = hist.entry((layer.layer, t)).or_insert((0, 0));
                entry.0 += (keep == 1.0) as usize;
                entry.1 += 1;
            }
        }
    }
    hist.into_iter()
        .map(|((layer, t), (kept, total))| KeepStat {
            layer,
            t,
            kept,
            total,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{synth_rotating_bar, accumulate_frames, Direction, SYNTH_DT_US};
    use crate::network::{LayerSpec, NetworkConfig};
    use crate::razor::PruneDecision;

    fn tiny_net() -> Network {
        Network::new(NetworkConfig {
            input: (2, 8, 8),
            t_steps: 4,
            num_classes: 2,
            layers: vec![
                LayerSpec::Conv {
                    out_channels: 3,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                },
                LayerSpec::Dense { width: 8 },
            ],
            ..NetworkConfig::default()
        })
        .unwrap()
    }

    fn tiny_dataset(n_per_class: usize) -> Vec<Sample> {
        let mut samples = Vec::new();
        for direction in [Direction::Cw, Direction::Ccw] {
            for i in 0..n_per_class {
                let seed = direction.label() as u64 * 1000 + i as u64;
                let stream = synth_rotating_bar(8, 8, 4, direction, 12, seed).unwrap();
                let (frames, _) = accumulate_frames(&stream, SYNTH_DT_US, 4).unwrap();
                samples.push(Sample {
                    name: format!("{direction:?}-{i}"),
                    frames,
                    label: direction.label(),
                });
            }
        }
        samples
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let net = tiny_net();
        let data = tiny_dataset(2);
        let mut state = TrainState::new(net.init_params().unwrap(), 7);
        let before = state.params.clone();
        let hyper = AdamHyper {
            lr: 0.0,
            ..AdamHyper::default()
        };
        let loss = train_epoch(&net, &mut state, &data, 2, &hyper, 0).unwrap();
        assert!(loss.is_finite());
        assert_eq!(state.params, before);
    }

    #[test]
    fn same_seed_gives_bitwise_identical_parameters() {
        let net = tiny_net();
        let data = tiny_dataset(2);
        let hyper = AdamHyper::default();
        let run = || {
            let mut state = TrainState::new(net.init_params().unwrap(), 13);
            for epoch in 0..3 {
                train_epoch(&net, &mut state, &data, 3, &hyper, epoch).unwrap();
            }
            state.params
        };
        let a = run();
        let b = run();
        for (name, t) in &a {
            let u = &b[name];
            for (x, y) in t.data().iter().zip(u.data()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn overfits_a_single_sample() {
        let net = tiny_net();
        let data = tiny_dataset(1);
        let single = vec![data[0].clone()];
        let mut state = TrainState::new(net.init_params().unwrap(), 3);
        let hyper = AdamHyper::default();
        let first = train_epoch(&net, &mut state, &single, 1, &hyper, 0).unwrap();
        let mut last = first;
        for epoch in 1..50 {
            last = train_epoch(&net, &mut state, &single, 1, &hyper, epoch).unwrap();
        }
        assert!(
            last < first,
            "loss must fall when overfitting one sample: {first} -> {last}"
        );
    }

    #[test]
    fn evaluate_train_mode_keeps_everything() {
        let net = tiny_net();
        let data = tiny_dataset(2);
        let params = net.init_params().unwrap();
        let report = evaluate(&net, &params, &data, Mode::Train).unwrap();
        assert_eq!(report.kept_fraction, 1.0);
        assert!(report.accuracy >= 0.0 && report.accuracy <= 1.0);
    }

    #[test]
    fn evaluate_prunes_under_max_threshold() {
        let mut cfg = tiny_net().config().clone();
        cfg.s_th = 1.0;
        let net = Network::new(cfg).unwrap();
        let data = tiny_dataset(2);
        let params = net.init_params().unwrap();
        let report = evaluate(&net, &params, &data, Mode::Infer).unwrap();
        assert!(
            report.kept_fraction < 1.0,
            "threshold 1.0 on non-constant scores must prune"
        );
    }

    #[test]
    fn statistics_count_by_hand() {
        let mk = |keeps: &[f32]| PruneDecision {
            scores: Tensor::zeros(&[keeps.len()]),
            keep_mask: Tensor::new(vec![keeps.len()], keeps.to_vec()).unwrap(),
            s_th: 0.4,
        };
        let decisions = vec![
            SampleDecisions {
                sample: "a".into(),
                layers: vec![LayerDecision {
                    layer: 1,
                    decision: mk(&[1.0, 0.0]),
                }],
            },
            SampleDecisions {
                sample: "b".into(),
                layers: vec![LayerDecision {
                    layer: 1,
                    decision: mk(&[1.0, 1.0]),
                }],
            },
            SampleDecisions {
                sample: "c".into(),
                layers: vec![LayerDecision {
                    layer: 1,
                    decision: mk(&[0.0, 1.0]),
                }],
            },
        ];
        let stats = prune_statistics(&decisions);
        assert_eq!(
            stats,
            vec![
                KeepStat {
                    layer: 1,
                    t: 0,
                    kept: 2,
                    total: 3
                },
                KeepStat {
                    layer: 1,
                    t: 1,
                    kept: 2,
                    total: 3
                },
            ]
        );
        assert!(prune_statistics(&[]).is_empty());
    }
}
