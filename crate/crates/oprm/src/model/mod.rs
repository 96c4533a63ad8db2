//! The trainable recurrent backend: a 2-layer gated-S6 stack.
//!
//! Each block applies, per token: pre-RMS-normalization, a SiLU gate branch,
//! a causal depthwise Conv1D feeding the S6 recurrence
//! `h_t = abar_t * h_{t-1} + bbar_t * x_t`, `y_t = c_t . h_t` with
//! input-dependent discretization `delta_t = softplus(S_delta x_t + offset)`,
//! gating, and a residual connection. Backpropagation through time is done by
//! hand in [`backward`] and checked against the finite-difference oracle in
//! [`fd`].

mod backward;
mod batch;
pub mod checkpoint;
mod fd;
mod forward;
mod optimizer;
mod params;
mod state;

pub use batch::{TrainBatch, TrainSample};
pub use fd::{central_diff, finite_diff_grad, max_relative_error};
pub use forward::discretize;
pub use optimizer::{apply_update, AdamW, OptimizerState};
pub use params::{BlockParams, ModelConfig, ModelParams};
pub use state::{HiddenState, LayerState};
