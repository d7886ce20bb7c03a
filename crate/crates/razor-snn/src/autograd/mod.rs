//! Minimal dense-tensor reverse-mode autodiff.
//!
//! [`Tensor`] is a rank-≤4 row-major `f32` value; [`Tape`] records one
//! forward pass and replays it backwards, including the rectangular
//! surrogate gradient used for the spike nonlinearity.

mod gradcheck;
mod ops;
mod tape;
mod tensor;

pub use gradcheck::{central_differences, finite_difference_check, max_relative_error};
pub use ops::{
    avg_pool2d, conv1d_same, conv2d, matmul, max_trailing, mean_trailing, softmax, spike_backward,
    spike_forward,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Result, Tensor, TensorError, MAX_RANK};
