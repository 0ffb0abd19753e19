//! Network layers with exact reverse-mode gradients.
//!
//! Layout conventions: dense activations are `[N, features]`, convolutional
//! activations are `[N, channels, length]`. `forward` caches what `backward`
//! needs; `infer` is the cache-free path for immutable trained models.

use rand::Rng;

use super::tensor::{axpy, dot, matmul, matmul_nt, matmul_tn, Tensor};
use super::NnetError;

/// Fully connected layer: `y = x·W + b` with `W: [din, dout]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
    cache_x: Option<Tensor>,
}

impl Linear {
    pub fn new(din: usize, dout: usize, rng: &mut impl Rng) -> Linear {
        Linear {
            w: Tensor::glorot(&[din, dout], din, dout, rng),
            b: Tensor::zeros(&[dout]),
            dw: Tensor::zeros(&[din, dout]),
            db: Tensor::zeros(&[dout]),
            cache_x: None,
        }
    }

    pub fn din(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn dout(&self) -> usize {
        self.w.shape()[1]
    }

    fn compute(&self, x: &Tensor) -> Tensor {
        let mut y = matmul(x, &self.w);
        let dout = self.dout();
        for row in y.data_mut().chunks_mut(dout) {
            for (yj, bj) in row.iter_mut().zip(self.b.data()) {
                *yj += bj;
            }
        }
        y
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = self.compute(x);
        self.cache_x = Some(x.clone());
        y
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        self.compute(x)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache_x.as_ref().expect("backward before forward");
        self.dw = matmul_tn(x, dy);
        let dout = self.dout();
        self.db.fill(0.0);
        for row in dy.data().chunks(dout) {
            axpy(1.0, row, self.db.data_mut());
        }
        matmul_nt(dy, &self.w)
    }
}

/// Elementwise `max(0, x)`; the subgradient at 0 is 0.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    cache_mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
        let y = self.infer(x);
        self.cache_mask = Some(mask);
        y
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        let data = x.data().iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_vec(x.shape(), data)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let mask = self.cache_mask.as_ref().expect("backward before forward");
        let data = dy
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &keep)| if keep { g } else { 0.0 })
            .collect();
        Tensor::from_vec(dy.shape(), data)
    }
}

/// Valid (unpadded) 1-d convolution with `filters: [cout, cin, k]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: Tensor,
    pub b: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
    pub stride: usize,
    cache_x: Option<Tensor>,
}

/// Output length of a valid convolution or pooling window scan.
pub fn window_out_len(len: usize, k: usize, stride: usize) -> Option<usize> {
    if len < k || k == 0 || stride == 0 {
        None
    } else {
        Some((len - k) / stride + 1)
    }
}

impl Conv1d {
    pub fn new(cin: usize, cout: usize, k: usize, stride: usize, rng: &mut impl Rng) -> Conv1d {
        Conv1d {
            w: Tensor::glorot(&[cout, cin, k], cin * k, cout * k, rng),
            b: Tensor::zeros(&[cout]),
            dw: Tensor::zeros(&[cout, cin, k]),
            db: Tensor::zeros(&[cout]),
            stride,
            cache_x: None,
        }
    }

    pub fn cin(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn cout(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.w.shape()[2]
    }

    fn compute(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        let (n, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if cin != self.cin() {
            return Err(NnetError::ShapeMismatch(format!(
                "conv1d expected {} input channels, got {cin}",
                self.cin()
            )));
        }
        let k = self.kernel();
        let out_len = window_out_len(len, k, self.stride).ok_or_else(|| {
            NnetError::ShapeMismatch(format!("conv1d input length {len} shorter than kernel {k}"))
        })?;
        let (cout, s) = (self.cout(), self.stride);
        let mut y = Tensor::zeros(&[n, cout, out_len]);
        for sample in 0..n {
            let x_base = sample * cin * len;
            let y_base = sample * cout * out_len;
            for co in 0..cout {
                let bias = self.b.data()[co];
                for t in 0..out_len {
                    let mut acc = bias;
                    for ci in 0..cin {
                        let x_off = x_base + ci * len + t * s;
                        let w_off = (co * cin + ci) * k;
                        acc += dot(
                            &x.data()[x_off..x_off + k],
                            &self.w.data()[w_off..w_off + k],
                        );
                    }
                    y.data_mut()[y_base + co * out_len + t] = acc;
                }
            }
        }
        Ok(y)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnetError> {
        let y = self.compute(x)?;
        self.cache_x = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        self.compute(x)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.cache_x.as_ref().expect("backward before forward");
        let (n, cin, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (cout, k, s) = (self.cout(), self.kernel(), self.stride);
        let out_len = dy.shape()[2];
        let mut dx = Tensor::zeros(&[n, cin, len]);
        self.dw.fill(0.0);
        self.db.fill(0.0);
        for sample in 0..n {
            let x_base = sample * cin * len;
            let dy_base = sample * cout * out_len;
            for co in 0..cout {
                let mut db_acc = 0.0;
                for t in 0..out_len {
                    let g = dy.data()[dy_base + co * out_len + t];
                    db_acc += g;
                    if g == 0.0 {
                        continue;
                    }
                    for ci in 0..cin {
                        let x_off = x_base + ci * len + t * s;
                        let w_off = (co * cin + ci) * k;
                        axpy(
                            g,
                            &self.w.data()[w_off..w_off + k],
                            &mut dx.data_mut()[x_off..x_off + k],
                        );
                        axpy(
                            g,
                            &x.data()[x_off..x_off + k],
                            &mut self.dw.data_mut()[w_off..w_off + k],
                        );
                    }
                }
                self.db.data_mut()[co] += db_acc;
            }
        }
        dx
    }
}

/// 1-d max pooling; gradient routes to the earliest maximum in each window.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub k: usize,
    pub stride: usize,
    cache_argmax: Option<Vec<usize>>,
    cache_in_shape: Option<Vec<usize>>,
}

impl MaxPool1d {
    pub fn new(k: usize, stride: usize) -> MaxPool1d {
        MaxPool1d {
            k,
            stride,
            cache_argmax: None,
            cache_in_shape: None,
        }
    }

    fn compute(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>), NnetError> {
        let (n, c, len) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let out_len = window_out_len(len, self.k, self.stride).ok_or_else(|| {
            NnetError::ShapeMismatch(format!(
                "maxpool1d input length {len} shorter than kernel {}",
                self.k
            ))
        })?;
        let mut y = Tensor::zeros(&[n, c, out_len]);
        let mut argmax = vec![0usize; n * c * out_len];
        for row in 0..n * c {
            let x_row = &x.data()[row * len..(row + 1) * len];
            for t in 0..out_len {
                let window = &x_row[t * self.stride..t * self.stride + self.k];
                let mut best = 0usize;
                for (j, &v) in window.iter().enumerate() {
                    if v > window[best] {
                        best = j;
                    }
                }
                y.data_mut()[row * out_len + t] = window[best];
                argmax[row * out_len + t] = row * len + t * self.stride + best;
            }
        }
        Ok((y, argmax))
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnetError> {
        let (y, argmax) = self.compute(x)?;
        self.cache_argmax = Some(argmax);
        self.cache_in_shape = Some(x.shape().to_vec());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        Ok(self.compute(x)?.0)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let argmax = self.cache_argmax.as_ref().expect("backward before forward");
        let shape = self.cache_in_shape.as_ref().expect("backward before forward");
        let mut dx = Tensor::zeros(shape);
        for (&src, &g) in argmax.iter().zip(dy.data()) {
            dx.data_mut()[src] += g;
        }
        dx
    }
}

/// `[N, C, L] -> [N, C·L]`; row-major layout makes this a pure reshape.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    cache_in_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.cache_in_shape = Some(x.shape().to_vec());
        self.infer(x)
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        let n = x.shape()[0];
        x.reshaped(&[n, x.len() / n])
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let shape = self.cache_in_shape.as_ref().expect("backward before forward");
        dy.reshaped(shape)
    }
}

/// `[N, F] -> [N, channels, F/channels]`; the input adapter for conv stacks.
#[derive(Debug, Clone)]
pub struct Reshape1d {
    pub channels: usize,
}

impl Reshape1d {
    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        let (n, f) = (x.shape()[0], x.shape()[1]);
        if f % self.channels != 0 {
            return Err(NnetError::ShapeMismatch(format!(
                "cannot reshape {f} features into {} channels",
                self.channels
            )));
        }
        Ok(x.reshaped(&[n, self.channels, f / self.channels]))
    }

    pub fn backward(&self, dy: &Tensor) -> Tensor {
        let n = dy.shape()[0];
        dy.reshaped(&[n, dy.len() / n])
    }
}

/// One network layer.
#[derive(Debug, Clone)]
pub enum Layer {
    Linear(Linear),
    Relu(Relu),
    Conv1d(Conv1d),
    MaxPool1d(MaxPool1d),
    Flatten(Flatten),
    Reshape1d(Reshape1d),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnetError> {
        match self {
            Layer::Linear(l) => Ok(l.forward(x)),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Conv1d(l) => l.forward(x),
            Layer::MaxPool1d(l) => l.forward(x),
            Layer::Flatten(l) => Ok(l.forward(x)),
            Layer::Reshape1d(l) => l.infer(x),
        }
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        match self {
            Layer::Linear(l) => Ok(l.infer(x)),
            Layer::Relu(l) => Ok(l.infer(x)),
            Layer::Conv1d(l) => l.infer(x),
            Layer::MaxPool1d(l) => l.infer(x),
            Layer::Flatten(l) => Ok(l.infer(x)),
            Layer::Reshape1d(l) => l.infer(x),
        }
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        match self {
            Layer::Linear(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::Conv1d(l) => l.backward(dy),
            Layer::MaxPool1d(l) => l.backward(dy),
            Layer::Flatten(l) => l.backward(dy),
            Layer::Reshape1d(l) => l.backward(dy),
        }
    }

    /// Parameter/gradient pairs in declaration order (weights before bias).
    pub fn param_grad_pairs(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        match self {
            Layer::Linear(l) => vec![(&mut l.w, &l.dw), (&mut l.b, &l.db)],
            Layer::Conv1d(l) => vec![(&mut l.w, &l.dw), (&mut l.b, &l.db)],
            _ => Vec::new(),
        }
    }

    /// Output shape for a given input shape, without running the layer.
    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnetError> {
        match self {
            Layer::Linear(l) => {
                if input.last() != Some(&l.din()) {
                    return Err(NnetError::ShapeMismatch(format!(
                        "linear expected {} input features, got {:?}",
                        l.din(),
                        input
                    )));
                }
                Ok(vec![input[0], l.dout()])
            }
            Layer::Relu(_) => Ok(input.to_vec()),
            Layer::Conv1d(l) => {
                let out = window_out_len(input[2], l.kernel(), l.stride).ok_or_else(|| {
                    NnetError::ShapeMismatch("conv1d input shorter than kernel".into())
                })?;
                Ok(vec![input[0], l.cout(), out])
            }
            Layer::MaxPool1d(l) => {
                let out = window_out_len(input[2], l.k, l.stride).ok_or_else(|| {
                    NnetError::ShapeMismatch("maxpool1d input shorter than kernel".into())
                })?;
                Ok(vec![input[0], input[1], out])
            }
            Layer::Flatten(_) => Ok(vec![input[0], input[1..].iter().product()]),
            Layer::Reshape1d(l) => Ok(vec![input[0], l.channels, input[1] / l.channels]),
        }
    }
}

/// A feedforward stack of layers trained with softmax cross-entropy.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Network {
        Network { layers }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnetError> {
        let mut current = x.clone();
        for layer in &mut self.layers {
            current = layer.forward(&current)?;
        }
        Ok(current)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnetError> {
        let mut current = x.clone();
        for layer in &self.layers {
            current = layer.infer(&current)?;
        }
        Ok(current)
    }

    pub fn backward(&mut self, dlogits: &Tensor) {
        let mut grad = dlogits.clone();
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(&grad);
        }
    }

    pub fn param_grad_pairs(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_grad_pairs())
            .collect()
    }

    pub fn param_count(&mut self) -> usize {
        self.param_grad_pairs().iter().map(|(p, _)| p.len()).sum()
    }

    /// Output shape for a given input shape (validates the whole stack).
    pub fn out_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnetError> {
        let mut shape = input.to_vec();
        for layer in &self.layers {
            shape = layer.out_shape(&shape)?;
        }
        Ok(shape)
    }
}

/// Mean softmax cross-entropy over a batch of logits, with its gradient
/// `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let (n, classes) = (logits.shape()[0], logits.shape()[1]);
    assert_eq!(n, labels.len(), "one label per row required");
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (row, &label) in labels.iter().enumerate() {
        assert!(label < classes, "label {label} out of range");
        let p = grad.data()[row * classes + label];
        loss -= p.max(f64::MIN_POSITIVE).ln();
        grad.data_mut()[row * classes + label] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    grad.data_mut().iter_mut().for_each(|g| *g *= scale);
    (loss * scale, grad)
}

/// Row-wise softmax with max-subtraction for stability.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let classes = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(classes) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}
