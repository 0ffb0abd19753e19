//! Dense row-major tensors and the matrix kernels the layers are built on.

use rand::Rng;

/// A dense tensor of `f64` values in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Identity matrix of size `n`.
    pub fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Glorot-uniform initialization: entries in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor::from_vec(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// Reinterpret the data under a new shape of the same volume.
    pub fn reshaped(&self, shape: &[usize]) -> Tensor {
        Tensor::from_vec(shape, self.data.clone())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// `C = A·B` for `A: [n, k]`, `B: [k, m]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.shape[0], a.shape[1]);
    let (kb, m) = (b.shape[0], b.shape[1]);
    assert_eq!(k, kb, "matmul inner dimensions differ: {k} vs {kb}");
    let mut c = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        let c_row = &mut c.data[i * m..(i + 1) * m];
        for (p, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[p * m..(p + 1) * m];
            for (cj, bj) in c_row.iter_mut().zip(b_row) {
                *cj += aik * bj;
            }
        }
    }
    c
}

/// `C = A·Bᵀ` for `A: [n, k]`, `B: [m, k]`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.shape[0], a.shape[1]);
    let (m, kb) = (b.shape[0], b.shape[1]);
    assert_eq!(k, kb, "matmul_nt inner dimensions differ: {k} vs {kb}");
    let mut c = Tensor::zeros(&[n, m]);
    for i in 0..n {
        let a_row = &a.data[i * k..(i + 1) * k];
        let c_row = &mut c.data[i * m..(i + 1) * m];
        for (j, cj) in c_row.iter_mut().enumerate() {
            let b_row = &b.data[j * k..(j + 1) * k];
            *cj = dot(a_row, b_row);
        }
    }
    c
}

/// `C = Aᵀ·B` for `A: [n, i]`, `B: [n, j]`, yielding `[i, j]`.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, i_dim) = (a.shape[0], a.shape[1]);
    let (nb, j_dim) = (b.shape[0], b.shape[1]);
    assert_eq!(n, nb, "matmul_tn outer dimensions differ: {n} vs {nb}");
    let mut c = Tensor::zeros(&[i_dim, j_dim]);
    for row in 0..n {
        let a_row = &a.data[row * i_dim..(row + 1) * i_dim];
        let b_row = &b.data[row * j_dim..(row + 1) * j_dim];
        for (i, &ai) in a_row.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let c_row = &mut c.data[i * j_dim..(i + 1) * j_dim];
            for (cj, bj) in c_row.iter_mut().zip(b_row) {
                *cj += ai * bj;
            }
        }
    }
    c
}

/// Dot product of two equally long slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x` over two equally long slices.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
