//! Iterative LIF and LIAF cell dynamics.
//!
//! One step of either cell updates the membrane potential as
//! `u_new = u * leak(o_prev) + a` and then fires: the LIF cell emits the
//! binary spike, the LIAF cell emits `relu(u_new)` while keeping the same
//! binary firing bookkeeping for the next step's leak.

use crate::autograd::{Result, Tape, Tensor, TensorError, Var};

/// How the previous spike enters the leak term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResetMode {
    /// `leak = lambda * (1 - o_prev)`: decay when silent, reset to zero on a
    /// spike.
    HardReset,
    /// `leak = tau * exp(-o_prev / tau)` applied verbatim.
    LiteralH,
}

impl std::str::FromStr for ResetMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hard_reset" => Ok(ResetMode::HardReset),
            "literal_h" => Ok(ResetMode::LiteralH),
            other => Err(format!(
                "unknown reset mode `{other}` (expected hard_reset|literal_h)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NeuronParams {
    /// Fire threshold; the boundary `u == v_th` fires.
    pub v_th: f32,
    /// Decay factor in `(0, 1)` used by [`ResetMode::HardReset`].
    pub leak: f32,
    pub reset_mode: ResetMode,
    /// Time constant used by [`ResetMode::LiteralH`].
    pub tau: f32,
    /// Width of the rectangular surrogate window.
    pub surrogate_width: f32,
}

impl Default for NeuronParams {
    fn default() -> Self {
        NeuronParams {
            v_th: 0.3,
            leak: 0.3,
            reset_mode: ResetMode::HardReset,
            tau: 0.3,
            surrogate_width: 1.0,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.leak > 0.0 && self.leak < 1.0) {
            return Err(TensorError::Invalid {
                what: "leak factor",
                why: format!("must lie in (0, 1), got {}", self.leak),
            });
        }
        if !(self.v_th > 0.0) {
            return Err(TensorError::Invalid {
                what: "fire threshold",
                why: format!("must be positive, got {}", self.v_th),
            });
        }
        if !(self.tau > 0.0) {
            return Err(TensorError::Invalid {
                what: "tau",
                why: format!("must be positive, got {}", self.tau),
            });
        }
        if !(self.surrogate_width > 0.0) {
            return Err(TensorError::Invalid {
                what: "surrogate width",
                why: format!("must be positive, got {}", self.surrogate_width),
            });
        }
        Ok(())
    }
}

/// Per-layer recurrent state carried across timesteps on a tape.
#[derive(Clone, Copy, Debug)]
pub struct NeuronStateVar {
    /// Membrane potential, same shape as the layer output.
    pub u: Var,
    /// Previous binary spike output.
    pub o_prev: Var,
}

/// Plain-value state for callers stepping cells outside a training tape.
#[derive(Clone, Debug)]
pub struct NeuronState {
    pub u: Tensor,
    pub o_prev: Tensor,
}

impl NeuronState {
    /// Initial state: zero potential, no prior spikes.
    pub fn zeros(shape: &[usize]) -> Self {
        NeuronState {
            u: Tensor::zeros(shape),
            o_prev: Tensor::zeros(shape),
        }
    }
}

/// Record the initial (zero) state on a tape.
pub fn init_state(tape: &mut Tape, shape: &[usize]) -> Result<NeuronStateVar> {
    Ok(NeuronStateVar {
        u: tape.constant(Tensor::zeros(shape))?,
        o_prev: tape.constant(Tensor::zeros(shape))?,
    })
}

/// Rate of temporal memory loss as a function of the previous spike.
pub fn leak_factor_var(tape: &mut Tape, o_prev: Var, params: &NeuronParams) -> Result<Var> {
    match params.reset_mode {
        ResetMode::HardReset => {
            // lambda * (1 - o_prev)
            tape.affine(o_prev, -params.leak, params.leak)
        }
        ResetMode::LiteralH => {
            // tau * exp(-o_prev / tau)
            let scaled = tape.affine(o_prev, -1.0 / params.tau, 0.0)?;
            let e = tape.exp(scaled)?;
            tape.scale(e, params.tau)
        }
    }
}

/// Plain-value convenience wrapper around [`leak_factor_var`].
pub fn leak_factor(o_prev: &Tensor, params: &NeuronParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let o = tape.constant(o_prev.clone())?;
    let v = leak_factor_var(&mut tape, o, params)?;
    Ok(tape.value(v).clone())
}

fn membrane_update(
    tape: &mut Tape,
    state: &NeuronStateVar,
    a: Var,
    params: &NeuronParams,
) -> Result<Var> {
    if tape.value(state.u).shape() != tape.value(a).shape() {
        return Err(TensorError::ShapeMismatch {
            op: "neuron step",
            lhs: tape.value(state.u).shape().to_vec(),
            rhs: tape.value(a).shape().to_vec(),
        });
    }
    let leak = leak_factor_var(tape, state.o_prev, params)?;
    let decayed = tape.mul(state.u, leak)?;
    tape.add(decayed, a)
}

/// One LIF step: returns the new state and the binary spike output.
pub fn lif_step_var(
    tape: &mut Tape,
    state: &NeuronStateVar,
    a: Var,
    params: &NeuronParams,
) -> Result<(NeuronStateVar, Var)> {
    let u_new = membrane_update(tape, state, a, params)?;
    let o = tape.spike(u_new, params.v_th, params.surrogate_width)?;
    Ok((NeuronStateVar { u: u_new, o_prev: o }, o))
}

/// One LIAF step: the membrane update and firing bookkeeping of
/// [`lif_step_var`], but the emitted output is the analog `relu(u_new)`.
pub fn liaf_step_var(
    tape: &mut Tape,
    state: &NeuronStateVar,
    a: Var,
    params: &NeuronParams,
) -> Result<(NeuronStateVar, Var)> {
    let u_new = membrane_update(tape, state, a, params)?;
    let o = tape.spike(u_new, params.v_th, params.surrogate_width)?;
    let y = tape.relu(u_new)?;
    Ok((NeuronStateVar { u: u_new, o_prev: o }, y))
}

/// Plain-value LIF step.
pub fn lif_step(
    state: &NeuronState,
    a: &Tensor,
    params: &NeuronParams,
) -> Result<(NeuronState, Tensor)> {
    let mut tape = Tape::new();
    let sv = NeuronStateVar {
        u: tape.constant(state.u.clone())?,
        o_prev: tape.constant(state.o_prev.clone())?,
    };
    let av = tape.constant(a.clone())?;
    let (ns, o) = lif_step_var(&mut tape, &sv, av, params)?;
    Ok((
        NeuronState {
            u: tape.value(ns.u).clone(),
            o_prev: tape.value(ns.o_prev).clone(),
        },
        tape.value(o).clone(),
    ))
}

/// Plain-value LIAF step.
pub fn liaf_step(
    state: &NeuronState,
    a: &Tensor,
    params: &NeuronParams,
) -> Result<(NeuronState, Tensor)> {
    let mut tape = Tape::new();
    let sv = NeuronStateVar {
        u: tape.constant(state.u.clone())?,
        o_prev: tape.constant(state.o_prev.clone())?,
    };
    let av = tape.constant(a.clone())?;
    let (ns, y) = liaf_step_var(&mut tape, &sv, av, params)?;
    Ok((
        NeuronState {
            u: tape.value(ns.u).clone(),
            o_prev: tape.value(ns.o_prev).clone(),
        },
        tape.value(y).clone(),
    ))
}
