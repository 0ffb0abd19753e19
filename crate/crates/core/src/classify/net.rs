//! The two deep architectures, built with a construction-time shape check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ClassifyError;
use crate::balance::Seed;
use crate::corpus::NUM_LABELS;
use crate::embed::EMBED_DIM;
use crate::nnet::{window_out_len, Conv1d, Flatten, Layer, Linear, MaxPool1d, Network, Relu, Reshape1d};

/// Fully connected widths of the dense model, input to output.
pub const DNN_WIDTHS: [usize; 6] = [EMBED_DIM, 512, 256, 128, 64, NUM_LABELS];

/// Convolution stack of the convolutional model: (filters, kernel, stride)
/// for each conv, each followed by an 8/2 max pool.
pub const CNN_CONVS: [(usize, usize, usize); 2] = [(16, 16, 1), (16, 16, 2)];
pub const CNN_POOL: (usize, usize) = (8, 2);

/// Fully connected widths after the conv stack, input to output.
pub const CNN_FC_WIDTHS: [usize; 5] = [1376, 688, 344, 172, NUM_LABELS];

/// Dense network: 768-512-256-128-64-8 with ReLU after each hidden layer.
pub fn build_dnn(seed: Seed) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let mut layers = Vec::new();
    for w in DNN_WIDTHS.windows(2) {
        layers.push(Layer::Linear(Linear::new(w[0], w[1], &mut rng)));
        if w[1] != NUM_LABELS {
            layers.push(Layer::Relu(Relu::default()));
        }
    }
    Network::new(layers)
}

/// Flatten width of the conv stack for a given input length.
pub fn cnn_flatten_width(input_len: usize) -> Result<usize, ClassifyError> {
    let mut channels = 1usize;
    let mut len = input_len;
    for &(filters, kernel, stride) in &CNN_CONVS {
        len = window_out_len(len, kernel, stride).ok_or_else(|| {
            ClassifyError::InvalidConfig(format!("conv kernel {kernel} exceeds length {len}"))
        })?;
        channels = filters;
        len = window_out_len(len, CNN_POOL.0, CNN_POOL.1).ok_or_else(|| {
            ClassifyError::InvalidConfig(format!("pool kernel {} exceeds length {len}", CNN_POOL.0))
        })?;
    }
    Ok(channels * len)
}

/// Convolutional network: two conv/pool stages then the 1376-688-344-172-8
/// head. Construction verifies that the flatten width computed from the
/// 768-length input matches the declared head width exactly.
pub fn build_cnn(seed: Seed) -> Result<Network, ClassifyError> {
    let flatten = cnn_flatten_width(EMBED_DIM)?;
    if flatten != CNN_FC_WIDTHS[0] {
        return Err(ClassifyError::ShapeCheck {
            expected: CNN_FC_WIDTHS[0],
            got: flatten,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let mut layers = vec![Layer::Reshape1d(Reshape1d { channels: 1 })];
    let mut cin = 1usize;
    for &(filters, kernel, stride) in &CNN_CONVS {
        layers.push(Layer::Conv1d(Conv1d::new(cin, filters, kernel, stride, &mut rng)));
        layers.push(Layer::Relu(Relu::default()));
        layers.push(Layer::MaxPool1d(MaxPool1d::new(CNN_POOL.0, CNN_POOL.1)));
        cin = filters;
    }
    layers.push(Layer::Flatten(Flatten::default()));
    for w in CNN_FC_WIDTHS.windows(2) {
        layers.push(Layer::Linear(Linear::new(w[0], w[1], &mut rng)));
        if w[1] != NUM_LABELS {
            layers.push(Layer::Relu(Relu::default()));
        }
    }
    let network = Network::new(layers);
    // End-to-end shape validation over the whole stack.
    let out = network.out_shape(&[1, EMBED_DIM])?;
    if out != [1, NUM_LABELS] {
        return Err(ClassifyError::ShapeCheck {
            expected: NUM_LABELS,
            got: out[1],
        });
    }
    Ok(network)
}
