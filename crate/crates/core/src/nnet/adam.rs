//! Adam optimizer with bias-corrected moment estimates.

use super::layers::Network;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Optimizer state: one first/second moment buffer per parameter tensor plus
/// the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new()
    }
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over a network's parameters using the gradients stored by
    /// the latest backward pass.
    pub fn step(&mut self, network: &mut Network, lr: f64) {
        let mut pairs = network.param_grad_pairs();
        if self.m.is_empty() {
            self.m = pairs.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), pairs.len(), "optimizer bound to another network");
        self.t += 1;
        for (i, (param, grad)) in pairs.iter_mut().enumerate() {
            adam_update(
                param.data_mut(),
                grad.data(),
                &mut self.m[i],
                &mut self.v[i],
                self.t,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
            );
        }
    }
}

/// The scalar Adam rule applied across one parameter buffer:
/// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, bias-correct both, then
/// `p ← p − lr·m̂ / (√v̂ + ε)`.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    assert_eq!(param.len(), grad.len(), "gradient shaped like parameter");
    assert!(t >= 1, "step counter must be incremented before updating");
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_with_unit_gradient_moves_by_almost_lr() {
        let mut param = vec![1.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        let lr = 0.01;
        adam_update(
            &mut param, &[1.0], &mut m, &mut v, 1, lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
        );
        // Bias-corrected m̂/√v̂ is exactly 1, so the step is lr/(1+ε).
        let expected = 1.0 - lr * (1.0 / (1.0 + ADAM_EPS));
        assert!((param[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut param = vec![0.25, -0.5];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        adam_update(
            &mut param,
            &[0.0, 0.0],
            &mut m,
            &mut v,
            1,
            0.1,
            ADAM_BETA1,
            ADAM_BETA2,
            ADAM_EPS,
        );
        assert_eq!(param, vec![0.25, -0.5]);
    }

    #[test]
    fn parameters_update_independently() {
        let mut param = vec![0.0, 0.0];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        adam_update(
            &mut param,
            &[1.0, 0.0],
            &mut m,
            &mut v,
            1,
            0.1,
            ADAM_BETA1,
            ADAM_BETA2,
            ADAM_EPS,
        );
        assert!(param[0] < 0.0);
        assert_eq!(param[1], 0.0);
    }

    #[test]
    fn state_step_counter_increments_even_without_motion() {
        let mut net = Network::new(vec![]);
        let mut state = AdamState::new();
        state.step(&mut net, 0.1);
        assert_eq!(state.step_count(), 1);
        state.step(&mut net, 0.1);
        assert_eq!(state.step_count(), 2);
    }
}
