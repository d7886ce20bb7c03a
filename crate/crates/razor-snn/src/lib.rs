//! A spiking neural network engine with learned temporal frame pruning.
//!
//! Event-camera streams are binned into dense frame sequences, classified by
//! leaky integrate-and-fire (LIF/LIAF) networks trained with
//! surrogate-gradient backpropagation through layers and timesteps, and
//! thinned at inference by an event pruning mechanism: learnable global
//! temporal embeddings score every frame, and frames below a threshold are
//! dropped together with their synaptic compute.
//!
//! The crate is organized around the data path:
//!
//! - [`events`] — event ingestion, synthesis, and frame accumulation
//! - [`autograd`] — a small tape-based reverse-mode autodiff engine with the
//!   rectangular surrogate gradient for the spike nonlinearity
//! - [`neuron`] — iterative LIF and LIAF cell dynamics
//! - [`razor`] — temporal embeddings, Events-of-Interest masks, feature
//!   reconstruction, importance scores, and the binary prune mask
//! - [`network`] — network assembly, rate-coded loss, Adam, training and
//!   evaluation loops, MAC accounting, checkpoints
//! - [`cli`] — the `razor-snn` command line (dataset synthesis, training,
//!   evaluation, pruning statistics)
//!
//! See the crate `examples/` directory for one runnable example per
//! capability.

pub mod autograd;
pub mod cli;
pub mod events;
pub mod network;
pub mod neuron;
pub mod razor;

/// Forward-pass mode.
///
/// Training keeps every frame and routes gradients through the soft
/// reconstruction; inference applies the binary prune mask and skips the
/// synaptic work of pruned timesteps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Mode::Train),
            "infer" => Ok(Mode::Infer),
            other => Err(format!("unknown mode `{other}` (expected train|infer)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Train => write!(f, "train"),
            Mode::Infer => write!(f, "infer"),
        }
    }
}
