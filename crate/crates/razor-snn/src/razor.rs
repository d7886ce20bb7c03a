//! The event pruning mechanism.
//!
//! A bank of learnable global temporal embeddings `B: (E, T)` scores the
//! frames of a feature sequence. The forward pipeline is:
//!
//! 1. **Embedding weighting** — global-average-pool the sequence over its
//!    spatial extent, convolve the pooled signal along time, softmax into an
//!    importance vector `w`, and scale each embedding column by it.
//! 2. **Events-of-Interest masks** — `m = sigmoid(b_hat @ x_flat)`, the
//!    similarity between weighted embeddings and the flattened frames.
//! 3. **Feature reconstruction** — `x_hat[t] = sum_e m[e] * x_flat[t]`, a
//!    soft re-weighting that replaces the vanilla features.
//! 4. **Importance scores** — `s[t] = max` over each reconstructed frame.
//! 5. **Pruning** — at inference, min-max-normalize the scores and zero out
//!    every frame below the threshold; training keeps all frames and stays
//!    fully differentiable.

use crate::autograd::{Result, Tape, Tensor, TensorError, Var};
use crate::Mode;
use rand::Rng;

/// Learnable parameters of one pruning stage.
#[derive(Clone, Debug)]
pub struct EmbeddingBank {
    /// Global temporal embeddings, shape `(E, T)`.
    pub embeddings: Tensor,
    /// 1-D temporal convolution kernel of the weighting module, shape
    /// `(1, 1, k)` with odd `k`.
    pub weighting_kernel: Tensor,
}

impl EmbeddingBank {
    /// Fresh bank: embeddings uniform in `[-1/sqrt(T), 1/sqrt(T)]`, kernel
    /// initialized to the length-`k` averaging filter.
    pub fn init<R: Rng>(
        embedding_count: usize,
        t_steps: usize,
        kernel_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if embedding_count == 0 || t_steps == 0 {
            return Err(TensorError::Invalid {
                what: "embedding bank",
                why: format!("E and T must be at least 1, got E={embedding_count} T={t_steps}"),
            });
        }
        if kernel_size % 2 == 0 || kernel_size == 0 {
            return Err(TensorError::Invalid {
                what: "weighting kernel",
                why: format!("size must be odd and positive, got {kernel_size}"),
            });
        }
        let bound = 1.0 / (t_steps as f32).sqrt();
        Ok(EmbeddingBank {
            embeddings: Tensor::uniform(&[embedding_count, t_steps], -bound, bound, rng),
            weighting_kernel: Tensor::full(&[1, 1, kernel_size], 1.0 / kernel_size as f32),
        })
    }

    pub fn embedding_count(&self) -> usize {
        self.embeddings.shape()[0]
    }

    pub fn t_steps(&self) -> usize {
        self.embeddings.shape()[1]
    }
}

/// Tape handles for one bank's parameters within a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct BankVars {
    pub embeddings: Var,
    pub weighting_kernel: Var,
}

impl BankVars {
    /// Record the bank's parameters as leaves on `tape`.
    pub fn record(tape: &mut Tape, bank: &EmbeddingBank, requires_grad: bool) -> Result<Self> {
        Ok(BankVars {
            embeddings: tape.leaf(bank.embeddings.clone(), requires_grad)?,
            weighting_kernel: tape.leaf(bank.weighting_kernel.clone(), requires_grad)?,
        })
    }
}

/// Per-timestep scores and the binary keep decision derived from them.
#[derive(Clone, Debug)]
pub struct PruneDecision {
    /// Importance scores `S`, shape `(T,)`.
    pub scores: Tensor,
    /// Binary keep mask, shape `(T,)`; `1` keeps the frame.
    pub keep_mask: Tensor,
    /// Threshold applied to the min-max-normalized scores.
    pub s_th: f32,
}

impl PruneDecision {
    pub fn kept(&self) -> usize {
        self.keep_mask.data().iter().filter(|&&v| v == 1.0).count()
    }

    pub fn t_steps(&self) -> usize {
        self.keep_mask.len()
    }
}

fn check_t(tape: &Tape, x: Var, bank_t: usize) -> Result<()> {
    let t = tape.value(x).shape().first().copied().unwrap_or(0);
    if t != bank_t {
        return Err(TensorError::ShapeMismatch {
            op: "razor",
            lhs: tape.value(x).shape().to_vec(),
            rhs: vec![bank_t],
        });
    }
    Ok(())
}

/// Embedding-importance vector `w: (T,)`: pool the sequence spatially,
/// convolve along time, softmax. Sums to one.
pub fn temporal_importance_var(tape: &mut Tape, x: Var, bank: &BankVars) -> Result<Var> {
    let bank_t = tape.value(bank.embeddings).shape()[1];
    check_t(tape, x, bank_t)?;
    let pooled = tape.mean_trailing(x)?;
    let mixed = tape.conv1d_same(pooled, bank.weighting_kernel)?;
    tape.softmax(mixed, 0)
}

/// Scale each embedding column by its importance:
/// `b_hat[e, t] = w[t] * B[e, t]`.
pub fn weight_embeddings_var(tape: &mut Tape, bank: &BankVars, w: Var) -> Result<Var> {
    tape.mul(bank.embeddings, w)
}

/// Events-of-Interest masks `m = sigmoid(b_hat @ x_flat): (E, D)` where
/// `x_flat: (T, D)` flattens everything after the time axis.
pub fn eoi_mask_var(tape: &mut Tape, b_hat: Var, x_flat: Var) -> Result<Var> {
    let prod = tape.matmul(b_hat, x_flat)?;
    tape.sigmoid(prod)
}

/// Reconstructed features: `x_hat[t, :] = sum_e m[e, :] * x_flat[t, :]`.
pub fn reconstruct_var(tape: &mut Tape, m: Var, x_flat: Var) -> Result<Var> {
    let mask_sum = tape.sum_axis0(m)?;
    tape.mul(x_flat, mask_sum)
}

/// Importance scores `s[t] = max` over everything after the time axis.
pub fn importance_scores_var(tape: &mut Tape, x_hat: Var) -> Result<Var> {
    tape.max_trailing(x_hat)
}

/// Binary keep mask from raw scores: min-max normalize over `T`, keep
/// frames whose normalized score is at least `s_th`. All-equal scores keep
/// every frame.
pub fn prune_mask(scores: &Tensor, s_th: f32) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&s_th) {
        return Err(TensorError::Invalid {
            what: "prune threshold",
            why: format!("must lie in [0, 1], got {s_th}"),
        });
    }
    let data = scores.data();
    let min = data.iter().cloned().fold(f32::INFINITY, f32::min);
    let max = data.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    if min == max {
        return Ok(Tensor::full(scores.shape(), 1.0));
    }
    let range = max - min;
    Ok(scores.map(|s| if (s - min) / range >= s_th { 1.0 } else { 0.0 }))
}

/// Output of [`razor_forward_var`]: the (possibly masked) feature sequence
/// and the per-timestep decision.
pub struct RazorOutput {
    pub out: Var,
    pub decision: PruneDecision,
}

/// Full pruning pipeline over a feature sequence `x: (T, ...)`.
///
/// In [`Mode::Train`] the output is the soft reconstruction `x_hat` (fully
/// differentiable) and the decision keeps every frame. In [`Mode::Infer`]
/// pruned timesteps of the output are exactly zero.
pub fn razor_forward_var(
    tape: &mut Tape,
    x: Var,
    bank: &BankVars,
    s_th: f32,
    mode: Mode,
) -> Result<RazorOutput> {
    let x_shape = tape.value(x).shape().to_vec();
    let t_steps = *x_shape.first().ok_or(TensorError::Invalid {
        what: "razor input",
        why: "rank must be at least 1".into(),
    })?;
    let inner: usize = x_shape[1..].iter().product::<usize>().max(1);

    let w = temporal_importance_var(tape, x, bank)?;
    let b_hat = weight_embeddings_var(tape, bank, w)?;
    let x_flat = tape.reshape(x, &[t_steps, inner])?;
    let m = eoi_mask_var(tape, b_hat, x_flat)?;
    let x_hat_flat = reconstruct_var(tape, m, x_flat)?;
    let x_hat = tape.reshape(x_hat_flat, &x_shape)?;
    let scores_var = importance_scores_var(tape, x_hat)?;
    let scores = tape.value(scores_var).clone();

    match mode {
        Mode::Train => Ok(RazorOutput {
            out: x_hat,
            decision: PruneDecision {
                scores,
                keep_mask: Tensor::full(&[t_steps], 1.0),
                s_th,
            },
        }),
        Mode::Infer => {
            let keep = prune_mask(&scores, s_th)?;
            let mut keep_shape = vec![t_steps];
            keep_shape.extend(std::iter::repeat(1).take(x_shape.len() - 1));
            let keep_var = tape.constant(keep.reshape(&keep_shape)?)?;
            let masked = tape.mul(x_hat, keep_var)?;
            Ok(RazorOutput {
                out: masked,
                decision: PruneDecision {
                    scores,
                    keep_mask: keep,
                    s_th,
                },
            })
        }
    }
}

/// Plain-value pipeline: runs [`razor_forward_var`] on a throwaway tape.
pub fn razor_forward(
    x: &Tensor,
    bank: &EmbeddingBank,
    s_th: f32,
    mode: Mode,
) -> Result<(Tensor, PruneDecision)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone())?;
    let bank_vars = BankVars::record(&mut tape, bank, false)?;
    let out = razor_forward_var(&mut tape, xv, &bank_vars, s_th, mode)?;
    Ok((tape.value(out.out).clone(), out.decision))
}

/// Plain-value embedding importance.
pub fn temporal_importance(x: &Tensor, bank: &EmbeddingBank) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone())?;
    let bank_vars = BankVars::record(&mut tape, bank, false)?;
    let w = temporal_importance_var(&mut tape, xv, &bank_vars)?;
    Ok(tape.value(w).clone())
}

/// Plain-value embedding weighting.
pub fn weight_embeddings(bank: &EmbeddingBank, w: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bank_vars = BankVars::record(&mut tape, bank, false)?;
    let wv = tape.constant(w.clone())?;
    let b_hat = weight_embeddings_var(&mut tape, &bank_vars, wv)?;
    Ok(tape.value(b_hat).clone())
}

/// Plain-value Events-of-Interest masks; `x` may be `(T, ...)` and is
/// flattened after the time axis.
pub fn eoi_mask(b_hat: &Tensor, x: &Tensor) -> Result<Tensor> {
    let t = x.shape()[0];
    let inner = x.len() / t.max(1);
    let mut tape = Tape::new();
    let b = tape.constant(b_hat.clone())?;
    let xf = tape.constant(x.reshape(&[t, inner])?)?;
    let m = eoi_mask_var(&mut tape, b, xf)?;
    Ok(tape.value(m).clone())
}

/// Plain-value feature reconstruction, preserving `x`'s shape.
pub fn reconstruct(m: &Tensor, x: &Tensor) -> Result<Tensor> {
    let t = x.shape()[0];
    let inner = x.len() / t.max(1);
    let mut tape = Tape::new();
    let mv = tape.constant(m.clone())?;
    let xf = tape.constant(x.reshape(&[t, inner])?)?;
    let x_hat = reconstruct_var(&mut tape, mv, xf)?;
    Ok(tape.value(x_hat).clone().reshape(x.shape())?)
}

/// Plain-value importance scores.
pub fn importance_scores(x_hat: &Tensor) -> Result<Tensor> {
    crate::autograd::max_trailing(x_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bank(e: usize, t: usize, seed: u64) -> EmbeddingBank {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingBank::init(e, t, 3, &mut rng).unwrap()
    }

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::uniform(shape, -1.0, 1.0, &mut rng)
    }

    #[test]
    fn importance_is_uniform_for_constant_input() {
        let b = bank(2, 4, 0);
        let x = Tensor::full(&[4, 1, 2, 2], 0.7);
        let w = temporal_importance(&x, &b).unwrap();
        for &v in w.data() {
            assert!((v - 0.25).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn importance_saturates_on_extreme_pooled_signal() {
        // Identity kernel isolates the softmax limit.
        let mut b = bank(1, 2, 0);
        b.weighting_kernel = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let mut x = Tensor::zeros(&[2, 1, 1, 1]);
        x.data_mut()[0] = 1.0e3;
        x.data_mut()[1] = -1.0e3;
        let w = temporal_importance(&x, &b).unwrap();
        assert!((w.data()[0] - 1.0).abs() < 1e-6);
        assert!(w.data()[1].abs() < 1e-6);
    }

    #[test]
    fn importance_sums_to_one_and_stays_positive() {
        let b = bank(3, 6, 1);
        let x = random_tensor(&[6, 2, 3, 3], 42);
        let w = temporal_importance(&x, &b).unwrap();
        // Oracle: direct summation.
        let total: f64 = w.data().iter().map(|&v| v as f64).sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert!(w.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn importance_rejects_t_mismatch() {
        let b = bank(2, 4, 0);
        let x = Tensor::zeros(&[5, 1, 2, 2]);
        assert!(temporal_importance(&x, &b).is_err());
    }

    #[test]
    fn weighting_identity_and_annihilation() {
        let b = bank(2, 3, 7);
        let ones = Tensor::full(&[3], 1.0);
        assert_eq!(weight_embeddings(&b, &ones).unwrap(), b.embeddings);

        let mut w = Tensor::full(&[3], 1.0);
        w.data_mut()[1] = 0.0;
        let b_hat = weight_embeddings(&b, &w).unwrap();
        for e in 0..2 {
            assert_eq!(b_hat.at(&[e, 1]), 0.0);
        }
    }

    #[test]
    fn weighting_matches_loop_oracle() {
        let b = bank(2, 3, 8);
        let w = random_tensor(&[3], 9);
        let b_hat = weight_embeddings(&b, &w).unwrap();
        for e in 0..2 {
            for t in 0..3 {
                let expect = w.data()[t] * b.embeddings.at(&[e, t]);
                assert_eq!(b_hat.at(&[e, t]), expect);
            }
        }
    }

    #[test]
    fn eoi_mask_is_half_on_zero_inputs() {
        let b_hat = Tensor::zeros(&[2, 2]);
        let x = random_tensor(&[2, 1, 1, 3], 10);
        let m = eoi_mask(&b_hat, &x).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.5));

        let b_hat = random_tensor(&[2, 2], 11);
        let x = Tensor::zeros(&[2, 1, 1, 3]);
        let m = eoi_mask(&b_hat, &x).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn eoi_mask_matches_matmul_oracle() {
        let b_hat = random_tensor(&[2, 2], 12);
        let x = random_tensor(&[2, 3], 13);
        let m = eoi_mask(&b_hat, &x).unwrap();
        for e in 0..2 {
            for d in 0..3 {
                let mut acc = 0.0f64;
                for t in 0..2 {
                    acc += b_hat.at(&[e, t]) as f64 * x.at(&[t, d]) as f64;
                }
                let expect = 1.0 / (1.0 + (-acc).exp());
                assert!((m.at(&[e, d]) as f64 - expect).abs() < 1e-6);
                assert!(m.at(&[e, d]) > 0.0 && m.at(&[e, d]) < 1.0);
            }
        }
    }

    #[test]
    fn reconstruct_identity_and_annihilation() {
        let x = random_tensor(&[3, 1, 2, 2], 14);
        let ones = Tensor::full(&[1, 4], 1.0);
        assert_eq!(reconstruct(&ones, &x).unwrap(), x);
        let zeros = Tensor::zeros(&[2, 4]);
        assert!(reconstruct(&zeros, &x)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruct_matches_triple_loop_oracle() {
        let m = random_tensor(&[3, 4], 15);
        let x = random_tensor(&[2, 1, 2, 2], 16);
        let got = reconstruct(&m, &x).unwrap();
        let xf = x.reshape(&[2, 4]).unwrap();
        for t in 0..2 {
            for d in 0..4 {
                let mut acc = 0.0f64;
                for e in 0..3 {
                    acc += m.at(&[e, d]) as f64 * xf.at(&[t, d]) as f64;
                }
                let flat = got.reshape(&[2, 4]).unwrap();
                assert!((flat.at(&[t, d]) as f64 - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn scores_constant_and_single_max() {
        let x = Tensor::full(&[3, 2, 2, 2], 0.7);
        let s = importance_scores(&x).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.7));

        let mut x = Tensor::full(&[4, 2, 3, 3], 0.1);
        x.data_mut()[2 * 18 + 7] = 9.9;
        let s = importance_scores(&x).unwrap();
        assert_eq!(s.data()[2], 9.9);
    }

    #[test]
    fn scores_match_exhaustive_scan() {
        let x = random_tensor(&[4, 2, 3, 3], 17);
        let s = importance_scores(&x).unwrap();
        let inner = 18;
        for t in 0..4 {
            let expect = x.data()[t * inner..(t + 1) * inner]
                .iter()
                .cloned()
                .fold(f32::NEG_INFINITY, f32::max);
            assert_eq!(s.data()[t], expect);
        }
    }

    #[test]
    fn prune_mask_thresholds_normalized_scores() {
        let s = Tensor::new(vec![2], vec![0.9, 0.2]).unwrap();
        // After min-max normalization scores become [1, 0].
        let keep = prune_mask(&s, 0.4).unwrap();
        assert_eq!(keep.data(), &[1.0, 0.0]);
    }

    #[test]
    fn prune_mask_keeps_everything_when_degenerate() {
        let s = Tensor::full(&[5], 0.37);
        let keep = prune_mask(&s, 0.9).unwrap();
        assert!(keep.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn prune_mask_matches_hand_normalization() {
        let s = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        // Normalized: [0, 1/3, 2/3, 1]; threshold 0.4 keeps the top two.
        let keep = prune_mask(&s, 0.4).unwrap();
        assert_eq!(keep.data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn forward_infer_zeroes_pruned_frames_exactly() {
        let b = bank(2, 6, 20);
        let x = random_tensor(&[6, 1, 3, 3], 21);
        let (out, decision) = razor_forward(&x, &b, 0.6, Mode::Infer).unwrap();
        assert!(decision.kept() < 6, "expected some pruning");
        let inner = 9;
        for t in 0..6 {
            if decision.keep_mask.data()[t] == 0.0 {
                assert!(out.data()[t * inner..(t + 1) * inner]
                    .iter()
                    .all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn forward_infer_with_all_kept_equals_train_output() {
        let b = bank(2, 4, 22);
        let x = random_tensor(&[4, 1, 2, 2], 23);
        let (train_out, train_dec) = razor_forward(&x, &b, 0.0, Mode::Train).unwrap();
        let (infer_out, infer_dec) = razor_forward(&x, &b, 0.0, Mode::Infer).unwrap();
        assert_eq!(train_out, infer_out);
        assert!(train_dec.keep_mask.data().iter().all(|&v| v == 1.0));
        assert!(infer_dec.keep_mask.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn forward_train_gradient_wrt_embeddings_matches_fd() {
        // f64 oracle of the whole soft pipeline; compares against the tape
        // gradient of sum(out) with respect to B on a (4,1,2,2) instance.
        let b0 = bank(2, 4, 24);
        let x = random_tensor(&[4, 1, 2, 2], 25);

        let mut tape = Tape::new();
        let xv = tape.constant(x.clone()).unwrap();
        let bank_vars = BankVars::record(&mut tape, &b0, true).unwrap();
        let out = razor_forward_var(&mut tape, xv, &bank_vars, 0.4, Mode::Train).unwrap();
        let loss = tape.sum(out.out).unwrap();
        let grads = tape.backward(loss).unwrap();
        let analytic = grads.get(bank_vars.embeddings).unwrap().clone();

        let kernel = b0.weighting_kernel.clone();
        let f = |emb: &Tensor| -> crate::autograd::Result<f64> {
            Ok(reference_sum(&x, emb, &kernel))
        };
        let err =
            crate::autograd::finite_difference_check(f, &b0.embeddings, 1e-4, &analytic).unwrap();
        assert!(err < 1e-3, "max relative error {err}");
    }

    /// f64 reference of the soft pruning pipeline returning sum(x_hat).
    fn reference_sum(x: &Tensor, emb: &Tensor, kernel: &Tensor) -> f64 {
        let (e_cnt, t) = (emb.shape()[0], emb.shape()[1]);
        let inner = x.len() / t;
        let xd: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
        // Spatial mean per frame.
        let pooled: Vec<f64> = (0..t)
            .map(|i| xd[i * inner..(i + 1) * inner].iter().sum::<f64>() / inner as f64)
            .collect();
        // Edge-replicated same-padded 1-D convolution.
        let kd: Vec<f64> = kernel.data().iter().map(|&v| v as f64).collect();
        let half = kd.len() / 2;
        let mixed: Vec<f64> = (0..t)
            .map(|i| {
                kd.iter()
                    .enumerate()
                    .map(|(j, &kv)| {
                        let src =
                            (i as isize + j as isize - half as isize).clamp(0, t as isize - 1);
                        kv * pooled[src as usize]
                    })
                    .sum()
            })
            .collect();
        // Softmax.
        let max = mixed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = mixed.iter().map(|&v| (v - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        let w: Vec<f64> = exps.iter().map(|&v| v / denom).collect();
        // Column-weighted embeddings, masks, reconstruction.
        let mut total = 0.0;
        let mut mask_sum = vec![0.0f64; inner];
        for e in 0..e_cnt {
            for d in 0..inner {
                let mut acc = 0.0;
                for ti in 0..t {
                    let b_hat = w[ti] * emb.at(&[e, ti]) as f64;
                    acc += b_hat * xd[ti * inner + d];
                }
                mask_sum[d] += 1.0 / (1.0 + (-acc).exp());
            }
        }
        for ti in 0..t {
            for d in 0..inner {
                total += mask_sum[d] * xd[ti * inner + d];
            }
        }
        total
    }

    #[test]
    fn pipeline_is_permutation_equivariant_in_flattening_order() {
        let b = bank(2, 4, 26);
        let x = random_tensor(&[4, 1, 2, 2], 27);
        let perm = [2usize, 0, 3, 1];
        let xf = x.reshape(&[4, 4]).unwrap();
        let mut permuted = Tensor::zeros(&[4, 1, 2, 2]);
        for t in 0..4 {
            for (dst, &src) in perm.iter().enumerate() {
                permuted.data_mut()[t * 4 + dst] = xf.at(&[t, src]);
            }
        }
        let (out, _) = razor_forward(&x, &b, 0.4, Mode::Train).unwrap();
        let (out_p, _) = razor_forward(&permuted, &b, 0.4, Mode::Train).unwrap();
        let of = out.reshape(&[4, 4]).unwrap();
        let opf = out_p.reshape(&[4, 4]).unwrap();
        for t in 0..4 {
            for (dst, &src) in perm.iter().enumerate() {
                // Spatial mean pooling is permutation-invariant, so the
                // whole pipeline just permutes along.
                assert!((opf.at(&[t, dst]) - of.at(&[t, src])).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reconstruct_magnitude_bounded_by_embedding_count() {
        let b = bank(3, 4, 28);
        let x = random_tensor(&[4, 1, 2, 2], 29);
        let (out, _) = razor_forward(&x, &b, 0.4, Mode::Train).unwrap();
        let max_x = x.data().iter().fold(0.0f32, |m, v| m.max(v.abs()));
        for &v in out.data() {
            assert!(v.abs() <= 3.0 * max_x + 1e-6);
        }
    }

    proptest! {
        /// The keep mask is exactly binary and monotone: raising the
        /// threshold never re-admits a frame.
        #[test]
        fn prop_prune_mask_binary_and_monotone(
            scores in proptest::collection::vec(-10.0f32..10.0, 2..12),
            lo in 0.0f32..1.0,
            hi in 0.0f32..1.0,
        ) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let s = Tensor::new(vec![scores.len()], scores).unwrap();
            let keep_lo = prune_mask(&s, lo).unwrap();
            let keep_hi = prune_mask(&s, hi).unwrap();
            for (&a, &b) in keep_lo.data().iter().zip(keep_hi.data()) {
                prop_assert!(a == 0.0 || a == 1.0);
                prop_assert!(b == 0.0 || b == 1.0);
                prop_assert!(b <= a, "raising s_th must not re-admit frames");
            }
        }

        /// EoI masks stay strictly inside (0, 1).
        #[test]
        fn prop_eoi_mask_open_interval(seed in 0u64..500) {
            let b_hat = random_tensor(&[2, 3], seed);
            let x = random_tensor(&[3, 4], seed.wrapping_add(1));
            let m = eoi_mask(&b_hat, &x).unwrap();
            for &v in m.data() {
                prop_assert!(v > 0.0 && v < 1.0);
            }
        }
    }
}
