//! Adam optimizer state and update rule.

use std::collections::BTreeMap;

use crate::autograd::{Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Parameters plus first/second Adam moments and the step counter.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: BTreeMap<String, Tensor>,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    pub step: u64,
    /// Run seed driving epoch shuffles.
    pub seed: u64,
}

impl TrainState {
    pub fn new(params: BTreeMap<String, Tensor>, seed: u64) -> Self {
        let m = params
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
            .collect();
        let v = params
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
            .collect();
        TrainState {
            params,
            m,
            v,
            step: 0,
            seed,
        }
    }

    /// Resume from checkpointed parameters at a given step; moments restart
    /// at zero.
    pub fn resume(params: BTreeMap<String, Tensor>, step: u64, seed: u64) -> Self {
        let mut state = TrainState::new(params, seed);
        state.step = step;
        state
    }
}

/// One bias-corrected Adam update. `grads` must carry a gradient for every
/// parameter.
pub fn adam_step(
    state: &mut TrainState,
    grads: &BTreeMap<String, Tensor>,
    hyper: &AdamHyper,
) -> Result<()> {
    for name in state.params.keys() {
        if !grads.contains_key(name) {
            return Err(TensorError::Invalid {
                what: "gradients",
                why: format!("missing gradient for `{name}`"),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - (hyper.beta1 as f64).powi(t);
    let bc2 = 1.0 - (hyper.beta2 as f64).powi(t);

    for (name, param) in state.params.iter_mut() {
        let g = &grads[name];
        if g.shape() != param.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: param.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        let m = state.m.get_mut(name).expect("moment mirrors params");
        let v = state.v.get_mut(name).expect("moment mirrors params");
        for i in 0..param.len() {
            let gi = g.data()[i] as f64;
            let mi = hyper.beta1 as f64 * m.data()[i] as f64 + (1.0 - hyper.beta1 as f64) * gi;
            let vi = hyper.beta2 as f64 * v.data()[i] as f64 + (1.0 - hyper.beta2 as f64) * gi * gi;
            m.data_mut()[i] = mi as f32;
            v.data_mut()[i] = vi as f32;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            let update = hyper.lr as f64 * m_hat / (v_hat.sqrt() + hyper.eps as f64);
            param.data_mut()[i] = (param.data()[i] as f64 - update) as f32;
        }
        param.check_finite("adam_step")?;
    }
    Ok(())
}
