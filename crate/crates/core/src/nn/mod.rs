//! Minimal neural-network kernel.
//!
//! Only the layer kinds the generator and discriminator need are provided:
//! same-padded 16×3 convolution, bidirectional LSTM, dense, leaky ReLU,
//! sigmoid and reshape, each with an exact reverse-mode gradient. Forward
//! passes are recorded on a [`Tape`] which [`Network::backward`] consumes.

mod adam;
mod checkpoint;
mod layers;
mod loss;
mod network;
mod spec;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use layers::{leaky_relu, sigmoid, BiLstm, Conv2d, Dense, Layer};
pub use loss::{bce_grad, bce_grad_wrt_logits, bce_loss};
pub use network::{Gradients, Network, Tape};
pub use spec::{param_count, LayerSpec, NamedLayer, NetworkSpec, CONV_KERNEL};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("unsupported layer: {0}")]
    UnsupportedLayer(String),
    #[error("label {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("backward called without a recorded forward pass")]
    NotRecorded,
    #[error("tensor contains non-finite values")]
    NonFinite,
}
