//! Tape-based reverse-mode autodiff over a closed op vocabulary.
//!
//! A [`Graph`] is built fresh for every forward pass (one training step or
//! one decode step). Ops append nodes, so node indices are already a
//! topological order and backward is a single reverse sweep. Each backward
//! call computes the gradient of one scalar and *adds* it into the
//! persistent per-node buffers: two backward calls yield exactly twice the
//! gradient, and gradients from several losses can be pooled by running
//! backward once per loss.

use std::collections::HashMap;

use super::{ops, same_shape, Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Handle to a node in one graph. Only valid for the graph that returned it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

enum Op<T: Scalar> {
    Leaf,
    /// Parameter cell from a table; `cell` indexes the table's storage.
    Param { cell: usize },
    MatMul(Value, Value),
    MatMulNT(Value, Value),
    Add(Value, Value),
    AddRow(Value, Value),
    Scale(Value, T),
    Relu(Value),
    SoftmaxRows(Value),
    LayerNorm { x: Value, gain: Value, bias: Value, xhat: Tensor<T>, inv_std: Vec<T> },
    Dropout { x: Value, factors: Vec<T> },
    GatherRows { table: Value, ids: Vec<usize> },
    ConcatLast { parts: Vec<Value> },
    SliceCols { x: Value, offset: usize },
    /// Additive attention mask; the mask itself is constant.
    AddMask { x: Value },
    SumAll(Value),
    /// Label-smoothed cross entropy, summed over active rows. Kept as one
    /// fused op so the backward rule is the exact closed form (p - q) and
    /// the forward can use the numerically safe log-sum-exp.
    CeLoss { logits: Value, probs: Tensor<T>, targets: Vec<usize>, active: Vec<bool>, eps: T },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    grad: Vec<T>,
    op: Op<T>,
}

enum Mode {
    Training { rng: Rng },
    Inference,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    mode: Mode,
    /// One Param node per cell and graph, so repeated lookups alias.
    param_nodes: HashMap<usize, Value>,
    /// Set once any dropout mask is actually drawn.
    stochastic: bool,
}

impl<T: Scalar> Graph<T> {
    /// Graph with live dropout; `seed` pins every mask drawn in this pass.
    pub fn training(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            mode: Mode::Training { rng: Rng::new(seed) },
            param_nodes: HashMap::new(),
            stochastic: false,
        }
    }

    /// Graph with dropout disabled (identity).
    pub fn inference() -> Self {
        Graph { nodes: Vec::new(), mode: Mode::Inference, param_nodes: HashMap::new(), stochastic: false }
    }

    pub fn is_training(&self) -> bool {
        matches!(self.mode, Mode::Training { .. })
    }

    /// True once any nonzero-rate dropout mask has been drawn; such graphs
    /// are rejected by gradient checking.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Value {
        let grad = vec![T::zero(); value.len()];
        self.nodes.push(Node { value, grad, op });
        Value(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Value) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a node (flat, same layout as its value).
    pub fn grad(&self, v: Value) -> &[T] {
        &self.nodes[v.0].grad
    }

    /// (cell index, accumulated gradient) for every parameter node.
    pub fn param_grads(&self) -> impl Iterator<Item = (usize, &[T])> {
        self.nodes.iter().filter_map(|n| match n.op {
            Op::Param { cell } => Some((cell, n.grad.as_slice())),
            _ => None,
        })
    }

    // ── node constructors ──────────────────────────────────────────────

    pub fn leaf(&mut self, t: Tensor<T>) -> Value {
        self.push(t, Op::Leaf)
    }

    /// Bind a parameter cell. The same cell always maps to the same node
    /// within one graph, so gradients from every use accumulate in one
    /// place regardless of how many slots alias the cell.
    pub fn param(&mut self, cell: usize, value: &Tensor<T>) -> Value {
        if let Some(&v) = self.param_nodes.get(&cell) {
            return v;
        }
        let v = self.push(value.clone(), Op::Param { cell });
        self.param_nodes.insert(cell, v);
        v
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let out = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn matmul_nt(&mut self, a: Value, b: Value) -> Result<Value> {
        let out = ops::matmul_nt(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMulNT(a, b)))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        let out = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Matrix plus broadcast row vector (bias add).
    pub fn add_row(&mut self, a: Value, b: Value) -> Result<Value> {
        let out = ops::add_row(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::AddRow(a, b)))
    }

    pub fn scale(&mut self, a: Value, c: T) -> Value {
        let out = ops::scale(self.value(a), c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Value) -> Value {
        let out = ops::relu(self.value(a));
        self.push(out, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Value) -> Result<Value> {
        let out = ops::softmax_rows(self.value(a))?;
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    pub fn layer_norm(&mut self, x: Value, gain: Value, bias: Value, eps: f64) -> Result<Value> {
        let (y, xhat, inv_std) =
            ops::layer_norm(self.value(x), self.value(gain), self.value(bias), T::from_f64(eps))?;
        Ok(self.push(y, Op::LayerNorm { x, gain, bias, xhat, inv_std }))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by 1/(1-rate), so the
    /// expectation matches inference, where this is the identity.
    pub fn dropout(&mut self, x: Value, rate: f64) -> Result<Value> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidDropoutRate { rate });
        }
        if rate == 0.0 {
            return Ok(x);
        }
        match &mut self.mode {
            Mode::Inference => Ok(x),
            Mode::Training { rng } => {
                let keep_scale = T::from_f64(1.0 / (1.0 - rate));
                let factors: Vec<T> = (0..self.nodes[x.0].value.len())
                    .map(|_| if rng.uniform() < rate { T::zero() } else { keep_scale })
                    .collect();
                self.stochastic = true;
                let out = Tensor::new(
                    self.value(x).shape().to_vec(),
                    self.value(x).data().iter().zip(&factors).map(|(&v, &f)| v * f).collect(),
                )?;
                Ok(self.push(out, Op::Dropout { x, factors }))
            }
        }
    }

    pub fn gather_rows(&mut self, table: Value, ids: &[usize]) -> Result<Value> {
        let out = ops::gather_rows(self.value(table), ids)?;
        Ok(self.push(out, Op::GatherRows { table, ids: ids.to_vec() }))
    }

    pub fn concat_last(&mut self, parts: &[Value]) -> Result<Value> {
        let tensors: Vec<&Tensor<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let out = ops::concat_last(&tensors)?;
        Ok(self.push(out, Op::ConcatLast { parts: parts.to_vec() }))
    }

    /// Split the last axis into `n` equal slices (multi-head view).
    pub fn split_last(&mut self, x: Value, n: usize) -> Result<Vec<Value>> {
        let cols = self.value(x).cols();
        if n == 0 || cols % n != 0 {
            return Err(Error::ShapeMismatch {
                op: "split_last",
                detail: format!("cannot split {cols} columns into {n} parts"),
            });
        }
        let width = cols / n;
        let mut out = Vec::with_capacity(n);
        for p in 0..n {
            let offset = p * width;
            let t = ops::slice_cols(self.value(x), offset, width)?;
            out.push(self.push(t, Op::SliceCols { x, offset }));
        }
        Ok(out)
    }

    /// Add a constant additive mask (0 for visible, -inf for masked).
    /// Gradient passes straight through; masked positions end up with zero
    /// gradient anyway once the masked scores go through softmax.
    pub fn add_mask(&mut self, x: Value, mask: &Tensor<T>) -> Result<Value> {
        same_shape("add_mask", self.value(x), mask)?;
        let out = ops::add(self.value(x), mask)?;
        Ok(self.push(out, Op::AddMask { x }))
    }

    /// Sum every element into a scalar (shape [1]).
    pub fn sum_all(&mut self, x: Value) -> Value {
        let mut acc = T::zero();
        for &v in self.value(x).data() {
            acc = acc + v;
        }
        self.push(Tensor::scalar(acc), Op::SumAll(x))
    }

    /// Label-smoothed cross entropy against `targets`, summed over rows.
    /// The smoothed target is q = (1-eps)*onehot + eps/V, mixing the uniform
    /// distribution over the full vocabulary (gold id included). Rows whose
    /// target equals `pad` are skipped. Returns the scalar sum node and the
    /// number of rows that actually contributed.
    pub fn ce_loss(
        &mut self,
        logits: Value,
        targets: &[usize],
        eps: f64,
        pad: Option<usize>,
    ) -> Result<(Value, usize)> {
        let lt = self.value(logits);
        if lt.rank() != 2 || lt.rows() != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "ce_loss",
                detail: format!("logits {:?} vs {} targets", lt.shape(), targets.len()),
            });
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidConfig(format!("label smoothing {eps} outside [0, 1)")));
        }
        let (rows, v) = (lt.rows(), lt.cols());
        let eps_t = T::from_f64(eps);
        let uniform = eps_t / T::from_f64(v as f64);
        let gold_w = T::one() - eps_t;

        let mut probs = Tensor::zeros(vec![rows, v]);
        let mut active = vec![false; rows];
        let mut total = T::zero();
        let mut count = 0usize;
        for i in 0..rows {
            let t = targets[i];
            if t >= v {
                return Err(Error::TokenOutOfRange { id: t, vocab_size: v });
            }
            if pad == Some(t) {
                continue;
            }
            active[i] = true;
            count += 1;
            let row = lt.row(i);
            let max = row.iter().cloned().fold(T::neg_infinity(), T::max);
            if !max.is_finite() {
                return Err(Error::Numeric(format!("non-finite logits in ce_loss row {i}")));
            }
            let mut sum_exp = T::zero();
            for &x in row {
                sum_exp = sum_exp + (x - max).exp();
            }
            let lse = max + sum_exp.ln();
            // loss = -[(1-eps) * logp_t + eps/V * sum_v logp_v]
            let mut sum_logp = T::zero();
            for (j, &x) in row.iter().enumerate() {
                let logp = x - lse;
                sum_logp = sum_logp + logp;
                probs.set2(i, j, logp.exp());
            }
            let logp_t = row[t] - lse;
            total = total - (gold_w * logp_t + uniform * sum_logp);
        }
        let node = self.push(
            Tensor::scalar(total),
            Op::CeLoss { logits, probs, targets: targets.to_vec(), active, eps: eps_t },
        );
        Ok((node, count))
    }

    // ── backward ───────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`. Gradients of this pass are
    /// computed in a scratch tape and then added into the persistent
    /// buffers, which is what makes repeated calls strictly additive.
    pub fn backward(&mut self, loss: Value) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                detail: format!("loss must be scalar, got {:?}", self.nodes[loss.0].value.shape()),
            });
        }
        let mut pass: Vec<Vec<T>> =
            self.nodes.iter().map(|n| vec![T::zero(); n.value.len()]).collect();
        pass[loss.0][0] = T::one();
        for i in (0..=loss.0).rev() {
            if pass[i].iter().all(|g| *g == T::zero()) {
                continue;
            }
            let deltas = self.backward_op(i, &pass[i])?;
            for (j, d) in deltas {
                let dst = &mut pass[j];
                for (a, b) in dst.iter_mut().zip(&d) {
                    *a = *a + *b;
                }
            }
        }
        for (node, g) in self.nodes.iter_mut().zip(&pass) {
            for (a, b) in node.grad.iter_mut().zip(g) {
                *a = *a + *b;
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `i` to its inputs, given the
    /// gradient `g` flowing into node `i` during this pass.
    fn backward_op(&self, i: usize, g: &[T]) -> Result<Vec<(usize, Vec<T>)>> {
        let node = &self.nodes[i];
        let out = match &node.op {
            Op::Leaf | Op::Param { .. } => Vec::new(),

            Op::MatMul(a, b) => {
                let gt = Tensor::new(node.value.shape().to_vec(), g.to_vec())?;
                let da = ops::matmul_nt(&gt, self.value(*b))?;
                let db = ops::matmul_tn(self.value(*a), &gt)?;
                vec![(a.0, da.data().to_vec()), (b.0, db.data().to_vec())]
            }

            Op::MatMulNT(a, b) => {
                // C = A Bᵀ  →  dA = G B,  dB = Gᵀ A
                let gt = Tensor::new(node.value.shape().to_vec(), g.to_vec())?;
                let da = ops::matmul(&gt, self.value(*b))?;
                let db = ops::matmul_tn(&gt, self.value(*a))?;
                vec![(a.0, da.data().to_vec()), (b.0, db.data().to_vec())]
            }

            Op::Add(a, b) => vec![(a.0, g.to_vec()), (b.0, g.to_vec())],

            Op::AddRow(a, b) => {
                let n = self.value(*b).len();
                let mut db = vec![T::zero(); n];
                for chunk in g.chunks(n) {
                    for (d, &gv) in db.iter_mut().zip(chunk) {
                        *d = *d + gv;
                    }
                }
                vec![(a.0, g.to_vec()), (b.0, db)]
            }

            Op::Scale(a, c) => vec![(a.0, g.iter().map(|&gv| gv * *c).collect())],

            Op::Relu(a) => {
                let x = self.value(*a);
                let d = x
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&xv, &gv)| if xv > T::zero() { gv } else { T::zero() })
                    .collect();
                vec![(a.0, d)]
            }

            Op::SoftmaxRows(a) => {
                // dx = p ⊙ (g - <g, p>) per row
                let p = &node.value;
                let n = p.cols();
                let mut d = vec![T::zero(); p.len()];
                for r in 0..p.rows() {
                    let prow = p.row(r);
                    let grow = &g[r * n..(r + 1) * n];
                    let mut dot = T::zero();
                    for (&pv, &gv) in prow.iter().zip(grow) {
                        dot = dot + pv * gv;
                    }
                    for j in 0..n {
                        d[r * n + j] = prow[j] * (grow[j] - dot);
                    }
                }
                vec![(a.0, d)]
            }

            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let n = xhat.cols();
                let m = xhat.rows();
                let gain_v = self.value(*gain);
                let inv_n = T::from_f64(1.0 / n as f64);
                let mut dx = vec![T::zero(); xhat.len()];
                let mut dgain = vec![T::zero(); n];
                let mut dbias = vec![T::zero(); n];
                for r in 0..m {
                    let hrow = xhat.row(r);
                    let grow = &g[r * n..(r + 1) * n];
                    let mut m1 = T::zero(); // mean of dxhat
                    let mut m2 = T::zero(); // mean of dxhat ⊙ xhat
                    for j in 0..n {
                        let dh = grow[j] * gain_v.data()[j];
                        m1 = m1 + dh;
                        m2 = m2 + dh * hrow[j];
                        dgain[j] = dgain[j] + grow[j] * hrow[j];
                        dbias[j] = dbias[j] + grow[j];
                    }
                    m1 = m1 * inv_n;
                    m2 = m2 * inv_n;
                    for j in 0..n {
                        let dh = grow[j] * gain_v.data()[j];
                        dx[r * n + j] = inv_std[r] * (dh - m1 - hrow[j] * m2);
                    }
                }
                vec![(x.0, dx), (gain.0, dgain), (bias.0, dbias)]
            }

            Op::Dropout { x, factors } => {
                let d = g.iter().zip(factors).map(|(&gv, &f)| gv * f).collect();
                vec![(x.0, d)]
            }

            Op::GatherRows { table, ids } => {
                let t = self.value(*table);
                let d_cols = t.cols();
                let mut d = vec![T::zero(); t.len()];
                for (r, &id) in ids.iter().enumerate() {
                    let grow = &g[r * d_cols..(r + 1) * d_cols];
                    let drow = &mut d[id * d_cols..(id + 1) * d_cols];
                    for (dv, &gv) in drow.iter_mut().zip(grow) {
                        *dv = *dv + gv;
                    }
                }
                vec![(table.0, d)]
            }

            Op::ConcatLast { parts } => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut out = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut d = vec![T::zero(); rows * w];
                    for r in 0..rows {
                        d[r * w..(r + 1) * w]
                            .copy_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    out.push((p.0, d));
                    offset += w;
                }
                out
            }

            Op::SliceCols { x, offset } => {
                let src = self.value(*x);
                let (rows, total) = (src.rows(), src.cols());
                let w = node.value.cols();
                let mut d = vec![T::zero(); src.len()];
                for r in 0..rows {
                    d[r * total + offset..r * total + offset + w]
                        .copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                vec![(x.0, d)]
            }

            Op::AddMask { x } => vec![(x.0, g.to_vec())],

            Op::SumAll(x) => {
                let n = self.value(*x).len();
                vec![(x.0, vec![g[0]; n])]
            }

            Op::CeLoss { logits, probs, targets, active, eps } => {
                let v = probs.cols();
                let uniform = *eps / T::from_f64(v as f64);
                let gold_w = T::one() - *eps;
                let up = g[0];
                let mut d = vec![T::zero(); probs.len()];
                for r in 0..probs.rows() {
                    if !active[r] {
                        continue;
                    }
                    let prow = probs.row(r);
                    let t = targets[r];
                    for j in 0..v {
                        let q = if j == t { gold_w + uniform } else { uniform };
                        d[r * v + j] = up * (prow[j] - q);
                    }
                }
                vec![(logits.0, d)]
            }
        };
        Ok(out)
    }
}
