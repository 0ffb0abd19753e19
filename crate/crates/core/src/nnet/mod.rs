//! Minimal dense/convolutional network kernel: tensors, layers with exact
//! reverse-mode gradients, Adam, finite-difference gradient checking, and the
//! `RBNN1` model file format.

mod adam;
mod gradcheck;
mod io;
mod layers;
mod tensor;

pub use adam::{adam_update, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gradcheck::{grad_check, GRAD_CHECK_H};
pub use io::{load_network, save_network, NETWORK_MAGIC};
pub use layers::{
    softmax_cross_entropy, softmax_rows, window_out_len, Conv1d, Flatten, Layer, Linear,
    MaxPool1d, Network, Relu, Reshape1d,
};
pub use tensor::{axpy, dot, matmul, matmul_nt, matmul_tn, Tensor};

/// Errors from the network kernel.
#[derive(Debug, thiserror::Error)]
pub enum NnetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
