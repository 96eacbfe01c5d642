use std::collections::BTreeMap;
use std::sync::Arc;

use super::kernels::{self, axpy, dot};
use super::{SparseRows, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Concat(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    SliceRows(Var, usize),
    MeanRows(Var, Arc<[usize]>),
    SpMM(Arc<SparseRows>, Var),
    SegmentSoftmax(Var, Arc<SparseRows>),
    EdgeAggregate {
        alpha: Var,
        values: Var,
        adj: Arc<SparseRows>,
    },
    SoftmaxRows(Var),
    CrossEntropy {
        logits: Var,
        labels: Arc<[usize]>,
        probs: Vec<f64>,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations in execution order so gradients can be replayed
/// backwards.
///
/// An operation whose inputs are all constants is stored as a constant
/// itself; only the subgraph reachable from a `requires_grad` leaf is
/// differentiated.
pub struct Tape {
    nodes: Vec<Node>,
    check_finite: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to every `requires_grad` leaf.
#[derive(Debug, Default)]
pub struct Gradients {
    by_leaf: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.by_leaf.get(&var)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.by_leaf.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.by_leaf.iter().map(|(v, t)| (*v, t))
    }
}

fn mismatch(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    t.dims2().map_err(|_| TensorError::Rank {
        op,
        expected: 2,
        shape: t.shape().to_vec(),
    })
}

/// Accepts `[n]`, `[n, 1]`, or `[1, n]` as a flat per-arc vector.
fn flat_len(op: &'static str, t: &Tensor) -> Result<usize, TensorError> {
    match t.shape() {
        [n] | [n, 1] => Ok(*n),
        [1, n] => Ok(*n),
        other => Err(TensorError::Rank {
            op,
            expected: 1,
            shape: other.to_vec(),
        }),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            check_finite: true,
        }
    }

    /// Toggles the NaN/Inf scan performed on every op output.
    pub fn with_finite_checks(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a leaf value.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Tensor,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var, TensorError> {
        if self.check_finite && !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(mismatch("add", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    /// Adds a length-`n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (xt, bt) = (self.value(x), self.value(row));
        let (m, n) = rank2("add_row", xt)?;
        if flat_len("add_row", bt)? != n {
            return Err(mismatch("add_row", xt, bt));
        }
        let mut data = xt.data().to_vec();
        for r in 0..m {
            for (o, b) in data[r * n..(r + 1) * n].iter_mut().zip(bt.data()) {
                *o += b;
            }
        }
        let out = Tensor::matrix(m, n, data)?;
        self.push("add_row", out, Op::AddRow(x, row), &[x, row])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(mismatch("mul", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, TensorError> {
        let xt = self.value(x);
        let out = Tensor::new(xt.shape().to_vec(), xt.data().iter().map(|v| v * s).collect())?;
        self.push("scale", out, Op::Scale(x, s), &[x])
    }

    /// `max(x, 0)`; the gradient at exactly 0 is 0.
    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let xt = self.value(x);
        let out = Tensor::new(
            xt.shape().to_vec(),
            xt.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        )?;
        self.push("relu", out, Op::Relu(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var, TensorError> {
        let xt = self.value(x);
        let out = Tensor::new(
            xt.shape().to_vec(),
            xt.data()
                .iter()
                .map(|&v| if v > 0.0 { v } else { slope * v })
                .collect(),
        )?;
        self.push("leaky_relu", out, Op::LeakyRelu(x, slope), &[x])
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts.first().ok_or(TensorError::Rank {
            op: "concat_cols",
            expected: 2,
            shape: vec![],
        })?;
        let m = rank2("concat_cols", self.value(*first))?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (r, c) = rank2("concat_cols", self.value(*p))?;
            if r != m {
                return Err(mismatch("concat_cols", self.value(*first), self.value(*p)));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let out = Tensor::matrix(m, total, data)?;
        self.push("concat_cols", out, Op::Concat(parts.to_vec()), parts)
    }

    /// Picks rows by index (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var, TensorError> {
        let xt = self.value(x);
        let (m, n) = rank2("gather_rows", xt)?;
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx.iter() {
            if i >= m {
                return Err(TensorError::Index {
                    op: "gather_rows",
                    index: i,
                    len: m,
                });
            }
            data.extend_from_slice(xt.row(i));
        }
        let out = Tensor::matrix(idx.len(), n, data)?;
        self.push("gather_rows", out, Op::GatherRows(x, idx), &[x])
    }

    /// Contiguous row block `start..end`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let xt = self.value(x);
        let (m, n) = rank2("slice_rows", xt)?;
        if start > end || end > m {
            return Err(TensorError::Index {
                op: "slice_rows",
                index: end,
                len: m,
            });
        }
        let out = Tensor::matrix(end - start, n, xt.data()[start * n..end * n].to_vec())?;
        self.push("slice_rows", out, Op::SliceRows(x, start), &[x])
    }

    /// Mean of the selected rows, as a `1×n` matrix. An empty selection
    /// yields zeros.
    pub fn mean_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var, TensorError> {
        let xt = self.value(x);
        let (m, n) = rank2("mean_rows", xt)?;
        let mut acc = vec![0.0; n];
        for &i in idx.iter() {
            if i >= m {
                return Err(TensorError::Index {
                    op: "mean_rows",
                    index: i,
                    len: m,
                });
            }
            axpy(1.0, xt.row(i), &mut acc);
        }
        if !idx.is_empty() {
            let inv = 1.0 / idx.len() as f64;
            acc.iter_mut().for_each(|v| *v *= inv);
        }
        let out = Tensor::matrix(1, n, acc)?;
        self.push("mean_rows", out, Op::MeanRows(x, idx), &[x])
    }

    /// Sparse-times-dense product `adj · x` with constant `adj`.
    pub fn spmm(&mut self, adj: &Arc<SparseRows>, x: Var) -> Result<Var, TensorError> {
        let xt = self.value(x);
        let (m, n) = rank2("spmm", xt)?;
        if m != adj.n_cols() {
            return Err(TensorError::ShapeMismatch {
                op: "spmm",
                lhs: vec![adj.n_rows(), adj.n_cols()],
                rhs: vec![m, n],
            });
        }
        let mut data = vec![0.0; adj.n_rows() * n];
        for r in 0..adj.n_rows() {
            let out_row = &mut data[r * n..(r + 1) * n];
            for k in adj.range(r) {
                axpy(adj.weights()[k], xt.row(adj.cols()[k]), out_row);
            }
        }
        let out = Tensor::matrix(adj.n_rows(), n, data)?;
        self.push("spmm", out, Op::SpMM(Arc::clone(adj), x), &[x])
    }

    /// Softmax of per-arc scores within each row segment of `adj`.
    pub fn segment_softmax(&mut self, x: Var, adj: &Arc<SparseRows>) -> Result<Var, TensorError> {
        let xt = self.value(x);
        let e = flat_len("segment_softmax", xt)?;
        if e != adj.nnz() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_softmax",
                lhs: xt.shape().to_vec(),
                rhs: vec![adj.nnz()],
            });
        }
        let mut data = xt.data().to_vec();
        for r in 0..adj.n_rows() {
            kernels::softmax_in_place(&mut data[adj.range(r)]);
        }
        let out = Tensor::new(xt.shape().to_vec(), data)?;
        self.push(
            "segment_softmax",
            out,
            Op::SegmentSoftmax(x, Arc::clone(adj)),
            &[x],
        )
    }

    /// `out[r] = Σ_k alpha[k] · values[cols[k]]` over the arcs `k` of row `r`.
    pub fn edge_aggregate(
        &mut self,
        alpha: Var,
        values: Var,
        adj: &Arc<SparseRows>,
    ) -> Result<Var, TensorError> {
        let (at, vt) = (self.value(alpha), self.value(values));
        let e = flat_len("edge_aggregate", at)?;
        let (m, n) = rank2("edge_aggregate", vt)?;
        if e != adj.nnz() || m != adj.n_cols() {
            return Err(TensorError::ShapeMismatch {
                op: "edge_aggregate",
                lhs: vec![e, m],
                rhs: vec![adj.nnz(), adj.n_cols()],
            });
        }
        let mut data = vec![0.0; adj.n_rows() * n];
        for r in 0..adj.n_rows() {
            let out_row = &mut data[r * n..(r + 1) * n];
            for k in adj.range(r) {
                axpy(at.data()[k], vt.row(adj.cols()[k]), out_row);
            }
        }
        let out = Tensor::matrix(adj.n_rows(), n, data)?;
        self.push(
            "edge_aggregate",
            out,
            Op::EdgeAggregate {
                alpha,
                values,
                adj: Arc::clone(adj),
            },
            &[alpha, values],
        )
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let xt = self.value(x);
        rank2("softmax_rows", xt)?;
        let out = xt.softmax_rows()?;
        self.push("softmax_rows", out, Op::SoftmaxRows(x), &[x])
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, labels: Arc<[usize]>) -> Result<Var, TensorError> {
        let lt = self.value(logits);
        let (m, c) = rank2("cross_entropy", lt)?;
        if labels.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: vec![m, c],
                rhs: vec![labels.len()],
            });
        }
        let mut probs = lt.data().to_vec();
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(TensorError::Index {
                    op: "cross_entropy",
                    index: y,
                    len: c,
                });
            }
            let row = lt.row(r);
            total += kernels::log_sum_exp(row) - row[y];
            kernels::softmax_in_place(&mut probs[r * c..(r + 1) * c]);
        }
        let loss = if m == 0 { 0.0 } else { total / m as f64 };
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            },
            &[logits],
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        let total = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(x), &[x])
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut out = Gradients::default();
        if !root.requires_grad {
            return Ok(out);
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    if node.requires_grad {
                        let t = Tensor::new(node.value.shape().to_vec(), g)?;
                        out.by_leaf.insert(Var(i), t);
                    }
                }
                Op::MatMul(a, b) => {
                    let (at, bt) = (self.value(*a), self.value(*b));
                    let (m, k) = at.dims2()?;
                    let n = bt.cols();
                    if let Some(ga) = self.slot(&mut grads, *a) {
                        kernels::matmul_nt_acc(&g, bt.data(), ga, m, n, k);
                    }
                    if let Some(gb) = self.slot(&mut grads, *b) {
                        kernels::matmul_tn_acc(at.data(), &g, gb, m, k, n);
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if let Some(gv) = self.slot(&mut grads, v) {
                            axpy(1.0, &g, gv);
                        }
                    }
                }
                Op::AddRow(x, row) => {
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        axpy(1.0, &g, gx);
                    }
                    let n = node.value.cols();
                    if let Some(gb) = self.slot(&mut grads, *row) {
                        for chunk in g.chunks(n.max(1)) {
                            axpy(1.0, chunk, gb);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (at, bt) = (self.value(*a).data(), self.value(*b).data());
                    if let Some(ga) = self.slot(&mut grads, *a) {
                        for ((o, gi), bi) in ga.iter_mut().zip(&g).zip(bt) {
                            *o += gi * bi;
                        }
                    }
                    if let Some(gb) = self.slot(&mut grads, *b) {
                        for ((o, gi), ai) in gb.iter_mut().zip(&g).zip(at) {
                            *o += gi * ai;
                        }
                    }
                }
                Op::Scale(x, s) => {
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        axpy(*s, &g, gx);
                    }
                }
                Op::Relu(x) => {
                    let xt = self.value(*x).data();
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        for ((o, gi), xi) in gx.iter_mut().zip(&g).zip(xt) {
                            if *xi > 0.0 {
                                *o += gi;
                            }
                        }
                    }
                }
                Op::LeakyRelu(x, slope) => {
                    let xt = self.value(*x).data();
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        for ((o, gi), xi) in gx.iter_mut().zip(&g).zip(xt) {
                            *o += if *xi > 0.0 { *gi } else { slope * gi };
                        }
                    }
                }
                Op::Concat(parts) => {
                    let m = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        if let Some(gp) = self.slot(&mut grads, *p) {
                            for r in 0..m {
                                axpy(
                                    1.0,
                                    &g[r * total + offset..r * total + offset + w],
                                    &mut gp[r * w..(r + 1) * w],
                                );
                            }
                        }
                        offset += w;
                    }
                }
                Op::GatherRows(x, idx) => {
                    let n = node.value.cols();
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        for (r, &src) in idx.iter().enumerate() {
                            axpy(1.0, &g[r * n..(r + 1) * n], &mut gx[src * n..(src + 1) * n]);
                        }
                    }
                }
                Op::SliceRows(x, start) => {
                    let n = node.value.cols();
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        axpy(1.0, &g, &mut gx[start * n..start * n + g.len()]);
                    }
                }
                Op::MeanRows(x, idx) => {
                    let n = node.value.cols();
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        let inv = 1.0 / idx.len().max(1) as f64;
                        for &src in idx.iter() {
                            axpy(inv, &g, &mut gx[src * n..(src + 1) * n]);
                        }
                    }
                }
                Op::SpMM(adj, x) => {
                    let n = node.value.cols();
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        for r in 0..adj.n_rows() {
                            let g_row = &g[r * n..(r + 1) * n];
                            for k in adj.range(r) {
                                let c = adj.cols()[k];
                                axpy(adj.weights()[k], g_row, &mut gx[c * n..(c + 1) * n]);
                            }
                        }
                    }
                }
                Op::SegmentSoftmax(x, adj) => {
                    let y = node.value.data();
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        for r in 0..adj.n_rows() {
                            let range = adj.range(r);
                            let inner = dot(&y[range.clone()], &g[range.clone()]);
                            for k in range {
                                gx[k] += y[k] * (g[k] - inner);
                            }
                        }
                    }
                }
                Op::EdgeAggregate { alpha, values, adj } => {
                    let n = node.value.cols();
                    let (at, vt) = (self.value(*alpha), self.value(*values));
                    if let Some(ga) = self.slot(&mut grads, *alpha) {
                        for r in 0..adj.n_rows() {
                            let g_row = &g[r * n..(r + 1) * n];
                            for k in adj.range(r) {
                                ga[k] += dot(g_row, vt.row(adj.cols()[k]));
                            }
                        }
                    }
                    if let Some(gv) = self.slot(&mut grads, *values) {
                        for r in 0..adj.n_rows() {
                            let g_row = &g[r * n..(r + 1) * n];
                            for k in adj.range(r) {
                                let c = adj.cols()[k];
                                axpy(at.data()[k], g_row, &mut gv[c * n..(c + 1) * n]);
                            }
                        }
                    }
                }
                Op::SoftmaxRows(x) => {
                    let n = node.value.cols();
                    let y = node.value.data();
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        for r in 0..node.value.rows() {
                            let span = r * n..(r + 1) * n;
                            let inner = dot(&y[span.clone()], &g[span.clone()]);
                            for k in span {
                                gx[k] += y[k] * (g[k] - inner);
                            }
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let c = self.value(*logits).cols();
                    let m = labels.len();
                    if let Some(gl) = self.slot(&mut grads, *logits) {
                        let s = g[0] / m.max(1) as f64;
                        for (r, &y) in labels.iter().enumerate() {
                            for j in 0..c {
                                let onehot = if j == y { 1.0 } else { 0.0 };
                                gl[r * c + j] += s * (probs[r * c + j] - onehot);
                            }
                        }
                    }
                }
                Op::Sum(x) => {
                    if let Some(gx) = self.slot(&mut grads, *x) {
                        gx.iter_mut().for_each(|v| *v += g[0]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Gradient accumulator for `v`, allocated on first use; `None` for
    /// constants.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(
            grads[v.0]
                .get_or_insert_with(|| vec![0.0; node.value.numel()])
                .as_mut_slice(),
        )
    }
}
