//! Differentiable numerical substrate.
//!
//! Every layer is a pure forward function plus a hand-derived adjoint. Matrices
//! are stored item-major: one row per time step, segment position or channel,
//! so a `[len, dim]` tensor holds the transpose of the usual column notation.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod lstm;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport, TensorCheck};
pub use layers::{
    conv1d, conv1d_backward, conv1d_param_grads, conv1d_rows, conv_output_len, dense, dense_backward, dropout,
    dropout_mask, relu_in_place, softmax, softmax_backward, weighted_cross_entropy, weighted_cross_entropy_grad,
    ConvGrads, DenseGrads, LOG_CLAMP,
};
pub use lstm::{bilstm, bilstm_backward, lstm, lstm_backward, BiLstmCache, BiLstmParams, LstmCache, LstmParams};
pub use tensor::{axpy, dot, NamedTensors, Parameters, Tensor};
