//! Dense feed-forward networks with exact reverse-mode gradients, losses,
//! AdamW, a binary checkpoint format and a finite-difference gradient checker.

mod adamw;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
mod network;
mod tensor;
pub mod train;

pub use adamw::{AdamW, AdamWParams};
pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use gradcheck::{grad_check, grad_check_with, GradCheckOptions};
pub use network::{Activation, Dense, Gradients, Network, Trace};
pub use tensor::Tensor;
pub use train::{fit, FitOptions};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// AdamW state sized for `net`'s parameters.
pub fn adamw_for(net: &Network, params: AdamWParams) -> AdamW {
    let sizes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
    AdamW::new(params, &sizes)
}

/// Applies one optimizer step to `net` with `grads`.
pub fn apply_step(opt: &mut AdamW, net: &mut Network, grads: &Gradients) -> Result<(), NnError> {
    let g = grads.slices();
    let mut p = net.param_slices_mut();
    opt.step(&mut p, &g)
}
