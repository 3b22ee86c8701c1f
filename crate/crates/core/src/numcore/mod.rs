//! Dense float64 tensors with tape-based reverse-mode differentiation.

mod adam;
mod mlp;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{mlp_forward, Activation, Linear, MlpParams};
pub use tape::{softmax_in_place, softmax_rows, Gradients, Tape, Var};
pub use tensor::{matmul, ParamId, ParamSet, Tensor};
