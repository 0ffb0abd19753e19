//! Central finite-difference verification of the analytic gradients.

use super::layers::{softmax_cross_entropy, Network};
use super::tensor::Tensor;

/// Step size for the central differences.
pub const GRAD_CHECK_H: f64 = 1e-4;

/// Compare the analytic gradient of the mean cross-entropy loss against
/// central finite differences over every parameter of `network`.
///
/// Returns the maximum relative error `|a − n| / max(|a| + |n|, 1e-3)`.
pub fn grad_check(network: &mut Network, input: &Tensor, labels: &[usize]) -> f64 {
    let logits = network.forward(input).expect("grad_check forward");
    let (_, dlogits) = softmax_cross_entropy(&logits, labels);
    network.backward(&dlogits);
    let analytic: Vec<Vec<f64>> = network
        .param_grad_pairs()
        .iter()
        .map(|(_, g)| g.data().to_vec())
        .collect();

    let mut max_rel = 0.0f64;
    for (tensor_idx, tensor_grads) in analytic.iter().enumerate() {
        for (i, &a) in tensor_grads.iter().enumerate() {
            let numeric = central_difference(network, input, labels, tensor_idx, i);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-3);
            max_rel = max_rel.max(rel);
        }
    }
    max_rel
}

fn loss_at(network: &mut Network, input: &Tensor, labels: &[usize]) -> f64 {
    let logits = network.infer(input).expect("grad_check infer");
    softmax_cross_entropy(&logits, labels).0
}

fn central_difference(
    network: &mut Network,
    input: &Tensor,
    labels: &[usize],
    tensor_idx: usize,
    flat_idx: usize,
) -> f64 {
    let original = {
        let mut pairs = network.param_grad_pairs();
        let value = pairs[tensor_idx].0.data()[flat_idx];
        pairs[tensor_idx].0.data_mut()[flat_idx] = value + GRAD_CHECK_H;
        value
    };
    let plus = loss_at(network, input, labels);
    {
        let mut pairs = network.param_grad_pairs();
        pairs[tensor_idx].0.data_mut()[flat_idx] = original - GRAD_CHECK_H;
    }
    let minus = loss_at(network, input, labels);
    {
        let mut pairs = network.param_grad_pairs();
        pairs[tensor_idx].0.data_mut()[flat_idx] = original;
    }
    (plus - minus) / (2.0 * GRAD_CHECK_H)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::layers::{Conv1d, Flatten, Layer, Linear, MaxPool1d, Relu, Reshape1d};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn three_layer_mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = Network::new(vec![
            Layer::Linear(Linear::new(6, 5, &mut rng)),
            Layer::Relu(Relu::default()),
            Layer::Linear(Linear::new(5, 4, &mut rng)),
            Layer::Relu(Relu::default()),
            Layer::Linear(Linear::new(4, 3, &mut rng)),
        ]);
        let input = random_input(&mut rng, &[4, 6]);
        let err = grad_check(&mut net, &input, &[0, 1, 2, 1]);
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn small_conv_net_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Network::new(vec![
            Layer::Reshape1d(Reshape1d { channels: 1 }),
            Layer::Conv1d(Conv1d::new(1, 2, 3, 1, &mut rng)),
            Layer::Relu(Relu::default()),
            Layer::MaxPool1d(MaxPool1d::new(2, 2)),
            Layer::Flatten(Flatten::default()),
            Layer::Linear(Linear::new(8, 3, &mut rng)),
        ]);
        let input = random_input(&mut rng, &[3, 10]);
        let err = grad_check(&mut net, &input, &[2, 0, 1]);
        assert!(err <= 1e-4, "max relative error {err}");
    }
}
