//! Minimal reverse-mode differentiation: tensors, a recording tape, dense
//! layers, Adam and step-decay learning rates.

mod layer;
mod optim;
mod tape;
mod tensor;

pub use layer::{affine_forward, Activation, BoundDense, BoundMlp, DenseLayer, Mlp, Parameterized};
pub use optim::{adam_update, clip_global_norm, lr_at, AdamConfig, AdamState, LrSchedule};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{sigmoid, softmax, squared_distance, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
