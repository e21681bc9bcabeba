//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every tensor is a 2-D row-major matrix owned by a [`Graph`]. Operations
//! compute values eagerly and record enough structure to propagate gradients
//! backwards from a scalar loss. The set of operations is exactly what the
//! sequence encoders and the training objective need; shapes are checked with
//! assertions because all shape decisions are made by this crate, not by
//! callers.

/// Handle to a tensor stored in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// Elementwise sum of two same-shape tensors.
    Add(TensorId, TensorId),
    /// Broadcast add of a (1, n) row onto every row of an (m, n) tensor.
    AddRow(TensorId, TensorId),
    /// Broadcast add of a (1, 1) scalar onto every element.
    AddScalarT(TensorId, TensorId),
    /// Add a constant to every element.
    AddConst(TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId, f64),
    /// (m, k) x (k, n).
    Matmul(TensorId, TensorId),
    /// (m, k) x (n, k)^T -> (m, n).
    MatmulTransB(TensorId, TensorId),
    /// Broadcast multiply of a (1, n) row onto every row of an (m, n) tensor.
    MulRow(TensorId, TensorId),
    Tanh(TensorId),
    Sigmoid(TensorId),
    Gelu(TensorId),
    Relu(TensorId),
    SoftmaxRows(TensorId),
    LogSoftmaxRows(TensorId),
    /// Row-wise layer normalization (no affine part).
    LayerNormRows(TensorId, f64),
    SumAll(TensorId),
    SliceRows(TensorId, usize, usize),
    SliceCols(TensorId, usize, usize),
    ConcatRows(TensorId, TensorId),
    ConcatCols(TensorId, TensorId),
    /// Select rows by index; duplicates allowed, gradient scatter-adds.
    GatherRows(TensorId, Vec<usize>),
}

struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    grad: Vec<f64>,
}

/// A tape of eagerly-evaluated tensor operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> TensorId {
        debug_assert_eq!(value.len(), rows * cols);
        let grad = vec![0.0; value.len()];
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
            grad,
        });
        TensorId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> TensorId {
        assert_eq!(value.len(), rows * cols, "leaf shape mismatch");
        self.push(Op::Leaf, rows, cols, value)
    }

    pub fn leaf_from(&mut self, rows: usize, cols: usize, value: &[f64]) -> TensorId {
        self.leaf(rows, cols, value.to_vec())
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> TensorId {
        self.push(Op::Leaf, rows, cols, vec![0.0; rows * cols])
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn scalar_value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.shape(id), (1, 1));
        self.nodes[id.0].value[0]
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        assert_eq!((r, c), self.shape(b), "add shape mismatch");
        let v = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        self.push(Op::Add(a, b), r, c, v)
    }

    pub fn add_row(&mut self, a: TensorId, row: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row shape mismatch");
        let mut v = self.nodes[a.0].value.clone();
        for i in 0..r {
            for j in 0..c {
                v[i * c + j] += self.nodes[row.0].value[j];
            }
        }
        self.push(Op::AddRow(a, row), r, c, v)
    }

    pub fn add_scalar_t(&mut self, a: TensorId, s: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(s), (1, 1), "add_scalar_t expects a (1,1) tensor");
        let sv = self.nodes[s.0].value[0];
        let v = self.nodes[a.0].value.iter().map(|x| x + sv).collect();
        self.push(Op::AddScalarT(a, s), r, c, v)
    }

    pub fn add_const(&mut self, a: TensorId, k: f64) -> TensorId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x + k).collect();
        self.push(Op::AddConst(a), r, c, v)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        assert_eq!((r, c), self.shape(b), "sub shape mismatch");
        let v = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x - y)
            .collect();
        self.push(Op::Sub(a, b), r, c, v)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        assert_eq!((r, c), self.shape(b), "mul shape mismatch");
        let v = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        self.push(Op::Mul(a, b), r, c, v)
    }

    pub fn scale(&mut self, a: TensorId, k: f64) -> TensorId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x * k).collect();
        self.push(Op::Scale(a, k), r, c, v)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul inner dimension mismatch");
        let mut v = vec![0.0; m * n];
        {
            let av = &self.nodes[a.0].value;
            let bv = &self.nodes[b.0].value;
            for i in 0..m {
                for l in 0..k {
                    let x = av[i * k + l];
                    if x == 0.0 {
                        continue;
                    }
                    let brow = &bv[l * n..(l + 1) * n];
                    let out = &mut v[i * n..(i + 1) * n];
                    for j in 0..n {
                        out[j] += x * brow[j];
                    }
                }
            }
        }
        self.push(Op::Matmul(a, b), m, n, v)
    }

    /// `a (m,k) x b (n,k)^T -> (m,n)`.
    pub fn matmul_trans_b(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        assert_eq!(k, k2, "matmul_trans_b inner dimension mismatch");
        let mut v = vec![0.0; m * n];
        {
            let av = &self.nodes[a.0].value;
            let bv = &self.nodes[b.0].value;
            for i in 0..m {
                let arow = &av[i * k..(i + 1) * k];
                for j in 0..n {
                    let brow = &bv[j * k..(j + 1) * k];
                    let mut s = 0.0;
                    for l in 0..k {
                        s += arow[l] * brow[l];
                    }
                    v[i * n + j] = s;
                }
            }
        }
        self.push(Op::MatmulTransB(a, b), m, n, v)
    }

    pub fn mul_row(&mut self, a: TensorId, row: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "mul_row shape mismatch");
        let mut v = self.nodes[a.0].value.clone();
        for i in 0..r {
            for j in 0..c {
                v[i * c + j] *= self.nodes[row.0].value[j];
            }
        }
        self.push(Op::MulRow(a, row), r, c, v)
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x.max(0.0)).collect();
        self.push(Op::Relu(a), r, c, v)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh(a), r, c, v)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0]
            .value
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        self.push(Op::Sigmoid(a), r, c, v)
    }

    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|&x| gelu(x)).collect();
        self.push(Op::Gelu(a), r, c, v)
    }

    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let mut v = self.nodes[a.0].value.clone();
        for i in 0..r {
            softmax_in_place(&mut v[i * c..(i + 1) * c]);
        }
        self.push(Op::SoftmaxRows(a), r, c, v)
    }

    pub fn log_softmax_rows(&mut self, a: TensorId) -> TensorId {
        let (r, c) = self.shape(a);
        let mut v = self.nodes[a.0].value.clone();
        for i in 0..r {
            log_softmax_in_place(&mut v[i * c..(i + 1) * c]);
        }
        self.push(Op::LogSoftmaxRows(a), r, c, v)
    }

    pub fn layer_norm_rows(&mut self, a: TensorId, eps: f64) -> TensorId {
        let (r, c) = self.shape(a);
        let mut v = self.nodes[a.0].value.clone();
        for i in 0..r {
            let row = &mut v[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * inv;
            }
        }
        self.push(Op::LayerNormRows(a, eps), r, c, v)
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.nodes[a.0].value.iter().sum();
        self.push(Op::SumAll(a), 1, 1, vec![s])
    }

    /// Sum of squared entries as a (1,1) tensor.
    pub fn squared_norm(&mut self, a: TensorId) -> TensorId {
        let sq = self.mul(a, a);
        self.sum_all(sq)
    }

    /// Dot product of two same-shape tensors as a (1,1) tensor.
    pub fn dot(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let p = self.mul(a, b);
        self.sum_all(p)
    }

    pub fn slice_rows(&mut self, a: TensorId, start: usize, len: usize) -> TensorId {
        let (r, c) = self.shape(a);
        assert!(start + len <= r, "slice_rows out of range");
        let v = self.nodes[a.0].value[start * c..(start + len) * c].to_vec();
        self.push(Op::SliceRows(a, start, len), len, c, v)
    }

    pub fn slice_cols(&mut self, a: TensorId, start: usize, len: usize) -> TensorId {
        let (r, c) = self.shape(a);
        assert!(start + len <= c, "slice_cols out of range");
        let mut v = Vec::with_capacity(r * len);
        for i in 0..r {
            v.extend_from_slice(&self.nodes[a.0].value[i * c + start..i * c + start + len]);
        }
        self.push(Op::SliceCols(a, start, len), r, len, v)
    }

    pub fn concat_rows(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(ca, cb, "concat_rows column mismatch");
        let mut v = self.nodes[a.0].value.clone();
        v.extend_from_slice(&self.nodes[b.0].value);
        self.push(Op::ConcatRows(a, b), ra + rb, ca, v)
    }

    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        assert_eq!(ra, rb, "concat_cols row mismatch");
        let mut v = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            v.extend_from_slice(&self.nodes[a.0].value[i * ca..(i + 1) * ca]);
            v.extend_from_slice(&self.nodes[b.0].value[i * cb..(i + 1) * cb]);
        }
        self.push(Op::ConcatCols(a, b), ra, ca + cb, v)
    }

    pub fn gather_rows(&mut self, a: TensorId, idx: &[usize]) -> TensorId {
        let (r, c) = self.shape(a);
        let mut v = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            assert!(i < r, "gather_rows index out of range");
            v.extend_from_slice(&self.nodes[a.0].value[i * c..(i + 1) * c]);
        }
        self.push(Op::GatherRows(a, idx.to_vec()), idx.len(), c, v)
    }

    /// Propagates gradients from a scalar `loss` back to every reachable node.
    pub fn backward(&mut self, loss: TensorId) {
        assert_eq!(self.shape(loss), (1, 1), "backward expects a scalar loss");
        for n in self.nodes.iter_mut() {
            n.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let grad = std::mem::take(&mut self.nodes[i].grad);
            let (rows, cols) = (self.nodes[i].rows, self.nodes[i].cols);
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    add_assign(&mut self.nodes[a.0].grad, &grad);
                    add_assign(&mut self.nodes[b.0].grad, &grad);
                }
                Op::AddRow(a, row) => {
                    add_assign(&mut self.nodes[a.0].grad, &grad);
                    for r in 0..rows {
                        for j in 0..cols {
                            self.nodes[row.0].grad[j] += grad[r * cols + j];
                        }
                    }
                }
                Op::AddScalarT(a, s) => {
                    add_assign(&mut self.nodes[a.0].grad, &grad);
                    self.nodes[s.0].grad[0] += grad.iter().sum::<f64>();
                }
                Op::AddConst(a) => add_assign(&mut self.nodes[a.0].grad, &grad),
                Op::Sub(a, b) => {
                    add_assign(&mut self.nodes[a.0].grad, &grad);
                    for (g, d) in self.nodes[b.0].grad.iter_mut().zip(&grad) {
                        *g -= d;
                    }
                }
                Op::Mul(a, b) => {
                    for k in 0..grad.len() {
                        let av = self.nodes[a.0].value[k];
                        let bv = self.nodes[b.0].value[k];
                        self.nodes[a.0].grad[k] += grad[k] * bv;
                        self.nodes[b.0].grad[k] += grad[k] * av;
                    }
                }
                Op::Scale(a, k) => {
                    for (g, d) in self.nodes[a.0].grad.iter_mut().zip(&grad) {
                        *g += k * d;
                    }
                }
                Op::Matmul(a, b) => {
                    // dA = dC . B^T ; dB = A^T . dC
                    let (m, k) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let n = cols;
                    for i in 0..m {
                        for l in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += grad[i * n + j] * self.nodes[b.0].value[l * n + j];
                            }
                            self.nodes[a.0].grad[i * k + l] += s;
                        }
                    }
                    for l in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += self.nodes[a.0].value[i * k + l] * grad[i * n + j];
                            }
                            self.nodes[b.0].grad[l * n + j] += s;
                        }
                    }
                }
                Op::MatmulTransB(a, b) => {
                    // C = A . B^T ; dA = dC . B ; dB = dC^T . A
                    let (m, k) = (self.nodes[a.0].rows, self.nodes[a.0].cols);
                    let n = cols;
                    for i in 0..m {
                        for l in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += grad[i * n + j] * self.nodes[b.0].value[j * k + l];
                            }
                            self.nodes[a.0].grad[i * k + l] += s;
                        }
                    }
                    for j in 0..n {
                        for l in 0..k {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += grad[i * n + j] * self.nodes[a.0].value[i * k + l];
                            }
                            self.nodes[b.0].grad[j * k + l] += s;
                        }
                    }
                }
                Op::MulRow(a, row) => {
                    for r in 0..rows {
                        for j in 0..cols {
                            let av = self.nodes[a.0].value[r * cols + j];
                            let rv = self.nodes[row.0].value[j];
                            self.nodes[a.0].grad[r * cols + j] += grad[r * cols + j] * rv;
                            self.nodes[row.0].grad[j] += grad[r * cols + j] * av;
                        }
                    }
                }
                Op::Relu(a) => {
                    for k in 0..grad.len() {
                        if self.nodes[a.0].value[k] > 0.0 {
                            self.nodes[a.0].grad[k] += grad[k];
                        }
                    }
                }
                Op::Tanh(a) => {
                    for k in 0..grad.len() {
                        let y = self.nodes[i].value[k];
                        self.nodes[a.0].grad[k] += grad[k] * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(a) => {
                    for k in 0..grad.len() {
                        let y = self.nodes[i].value[k];
                        self.nodes[a.0].grad[k] += grad[k] * y * (1.0 - y);
                    }
                }
                Op::Gelu(a) => {
                    for k in 0..grad.len() {
                        let x = self.nodes[a.0].value[k];
                        self.nodes[a.0].grad[k] += grad[k] * gelu_grad(x);
                    }
                }
                Op::SoftmaxRows(a) => {
                    for r in 0..rows {
                        let y = self.nodes[i].value[r * cols..(r + 1) * cols].to_vec();
                        let dy = &grad[r * cols..(r + 1) * cols];
                        let dot: f64 = y.iter().zip(dy).map(|(yi, di)| yi * di).sum();
                        for j in 0..cols {
                            self.nodes[a.0].grad[r * cols + j] += y[j] * (dy[j] - dot);
                        }
                    }
                }
                Op::LogSoftmaxRows(a) => {
                    for r in 0..rows {
                        let y = self.nodes[i].value[r * cols..(r + 1) * cols].to_vec();
                        let dy = &grad[r * cols..(r + 1) * cols];
                        let total: f64 = dy.iter().sum();
                        for j in 0..cols {
                            self.nodes[a.0].grad[r * cols + j] += dy[j] - y[j].exp() * total;
                        }
                    }
                }
                Op::LayerNormRows(a, eps) => {
                    for r in 0..rows {
                        let x = &self.nodes[a.0].value[r * cols..(r + 1) * cols];
                        let dy = &grad[r * cols..(r + 1) * cols];
                        let mean = x.iter().sum::<f64>() / cols as f64;
                        let var =
                            x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
                        let inv = 1.0 / (var + eps).sqrt();
                        let y: Vec<f64> = x.iter().map(|v| (v - mean) * inv).collect();
                        let mean_dy = dy.iter().sum::<f64>() / cols as f64;
                        let mean_dy_y =
                            dy.iter().zip(&y).map(|(d, yv)| d * yv).sum::<f64>() / cols as f64;
                        for j in 0..cols {
                            self.nodes[a.0].grad[r * cols + j] +=
                                inv * (dy[j] - mean_dy - y[j] * mean_dy_y);
                        }
                    }
                }
                Op::SumAll(a) => {
                    let d = grad[0];
                    for g in self.nodes[a.0].grad.iter_mut() {
                        *g += d;
                    }
                }
                Op::SliceRows(a, start, _len) => {
                    let c = cols;
                    for r in 0..rows {
                        for j in 0..c {
                            self.nodes[a.0].grad[(start + r) * c + j] += grad[r * c + j];
                        }
                    }
                }
                Op::SliceCols(a, start, len) => {
                    let ac = self.nodes[a.0].cols;
                    for r in 0..rows {
                        for j in 0..len {
                            self.nodes[a.0].grad[r * ac + start + j] += grad[r * len + j];
                        }
                    }
                }
                Op::ConcatRows(a, b) => {
                    let na = self.nodes[a.0].rows * cols;
                    add_assign(&mut self.nodes[a.0].grad, &grad[..na]);
                    add_assign(&mut self.nodes[b.0].grad, &grad[na..]);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a.0].cols;
                    let cb = self.nodes[b.0].cols;
                    for r in 0..rows {
                        for j in 0..ca {
                            self.nodes[a.0].grad[r * ca + j] += grad[r * cols + j];
                        }
                        for j in 0..cb {
                            self.nodes[b.0].grad[r * cb + j] += grad[r * cols + ca + j];
                        }
                    }
                }
                Op::GatherRows(a, idx) => {
                    for (r, &src) in idx.iter().enumerate() {
                        for j in 0..cols {
                            self.nodes[a.0].grad[src * cols + j] += grad[r * cols + j];
                        }
                    }
                }
            }
            self.nodes[i].grad = grad;
        }
    }
}

fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Numerically stable softmax, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Numerically stable log-softmax, in place.
pub fn log_softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    for x in row.iter_mut() {
        *x = *x - max - log_sum;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + GELU_A * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
