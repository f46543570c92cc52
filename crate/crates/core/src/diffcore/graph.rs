//! Tape of dense matrix operations with reverse-mode gradients.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and the backward sweep is a single reverse pass.

use std::borrow::Cow;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScalarMul(NodeId, f64),
    AddRow(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Reshape(NodeId),
    Transpose(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Softmax(NodeId),
    Embedding {
        table: NodeId,
        index: usize,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    MaskedFill {
        x: NodeId,
        filled: Vec<bool>,
    },
    Sum(NodeId),
    SoftmaxXent {
        logits: NodeId,
        target: usize,
        probs: Vec<f64>,
    },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Computation graph borrowing parameter storage for lifetime `'a`.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Result of [`Graph::backward`]: one optional gradient per node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn shape_str(t: &Tensor) -> String {
    format!("{}x{}", t.rows(), t.cols())
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(Cow::Owned(value), true)
    }

    /// Gradient-receiving leaf that borrows its value.
    pub fn param_ref(&mut self, value: &'a Tensor) -> NodeId {
        self.leaf(Cow::Borrowed(value), true)
    }

    /// Leaf that is never differentiated.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(Cow::Owned(value), false)
    }

    fn leaf(&mut self, value: Cow<'a, Tensor>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Tensor,
        op: Op,
        parents: &[NodeId],
    ) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::Numeric {
                op: name.to_string(),
            });
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim(
                op,
                format!("{} vs {}", shape_str(va), shape_str(vb)),
            ));
        }
        Ok(())
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(va.rows(), va.cols(), data).expect("shape preserved")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let value = self.zip_with(a, b, |x, y| x + y);
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_with(a, b, |x, y| x - y);
        self.push("sub", value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_with(a, b, |x, y| x * y);
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    pub fn scalar_mul(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let value = self.value(a).map(|x| x * s);
        self.push("scalar_mul", value, Op::ScalarMul(a, s), &[a])
    }

    /// Adds column vector `v` (length `cols`) to every row of `m`.
    pub fn add_row(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (vm, vv) = (self.value(m), self.value(v));
        if !vv.is_vector() || vv.rows() != vm.cols() {
            return Err(Error::dim(
                "add_row",
                format!("{} + row {}", shape_str(vm), shape_str(vv)),
            ));
        }
        let mut value = vm.clone();
        let cols = vm.cols();
        for row in value.data_mut().chunks_mut(cols) {
            for (x, b) in row.iter_mut().zip(vv.data()) {
                *x += b;
            }
        }
        self.push("add_row", value, Op::AddRow(m, v), &[m, v])
    }

    /// Stacks inputs along rows; all inputs must share a column count.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::dim("concat", "no inputs"));
        };
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(Error::dim(
                    "concat",
                    format!("column counts {cols} and {}", v.cols()),
                ));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Tensor::new(rows, cols, data)?;
        self.push("concat", value, Op::Concat(parts.to_vec()), parts)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let v = self.value(a);
        if rows * cols != v.len() {
            return Err(Error::dim(
                "reshape",
                format!("{} to {rows}x{cols}", shape_str(v)),
            ));
        }
        let value = Tensor::new(rows, cols, v.data().to_vec())?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).transposed();
        self.push("transpose", value, Op::Transpose(a), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(f64::tanh);
        self.push("tanh", value, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.value(a).map(f64::exp);
        self.push("exp", value, Op::Exp(a), &[a])
    }

    /// Softmax of a column vector.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.value(x).len();
        self.softmax_over(x, &vec![true; n])
    }

    /// Softmax restricted to `support`; entries outside it are exactly 0.
    pub fn softmax_over(&mut self, x: NodeId, support: &[bool]) -> Result<NodeId> {
        let v = self.value(x);
        if !v.is_vector() {
            return Err(Error::dim(
                "softmax",
                format!("expected a column vector, got {}", shape_str(v)),
            ));
        }
        if support.len() != v.len() {
            return Err(Error::dim(
                "softmax",
                format!("support of {} for length {}", support.len(), v.len()),
            ));
        }
        let probs = masked_softmax(v.data(), support)
            .ok_or_else(|| Error::Contract("softmax over an empty support".into()))?;
        let value = Tensor::column(&probs);
        self.push("softmax", value, Op::Softmax(x), &[x])
    }

    /// Row `index` of `table` as a column vector.
    pub fn embedding(&mut self, table: NodeId, index: usize) -> Result<NodeId> {
        let t = self.value(table);
        if index >= t.rows() {
            return Err(Error::Index {
                index,
                len: t.rows(),
            });
        }
        let value = Tensor::column(t.row(index));
        self.push(
            "embedding_lookup",
            value,
            Op::Embedding { table, index },
            &[table],
        )
    }

    /// Inverted dropout. `p == 0` returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: NodeId, p: f64, rng: &mut R) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Contract(format!("dropout rate {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let v = self.value(x);
        let mask: Vec<f64> = (0..v.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(v.rows(), v.cols(), data)?;
        self.push("dropout", value, Op::Dropout { x, mask }, &[x])
    }

    /// Overwrites the listed flat positions with `value`.
    pub fn masked_fill(&mut self, x: NodeId, positions: &[usize], value: f64) -> Result<NodeId> {
        let v = self.value(x);
        let mut filled = vec![false; v.len()];
        for &p in positions {
            if p >= v.len() {
                return Err(Error::Index {
                    index: p,
                    len: v.len(),
                });
            }
            filled[p] = true;
        }
        let mut out = v.clone();
        for (o, &f) in out.data_mut().iter_mut().zip(&filled) {
            if f {
                *o = value;
            }
        }
        self.push("masked_fill", out, Op::MaskedFill { x, filled }, &[x])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Inner product of two equal-shape tensors.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let m = self.mul(a, b)?;
        self.sum(m)
    }

    /// `-log softmax(logits)[target]`, computed stably.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let v = self.value(logits);
        if !v.is_vector() {
            return Err(Error::dim(
                "cross_entropy",
                format!("expected a column vector, got {}", shape_str(v)),
            ));
        }
        if target >= v.len() {
            return Err(Error::Index {
                index: target,
                len: v.len(),
            });
        }
        let (probs, log_z) = softmax_with_log_normalizer(v.data());
        let loss = log_z - v.data()[target];
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                target,
                probs,
            },
            &[logits],
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}",
                shape_str(lv)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let y = &*node.value;
        let wants = |id: NodeId| self.nodes[id.0].needs_grad;
        let mut acc = |id: NodeId, t: Tensor| accumulate(grads, id, t);

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if wants(*a) {
                    acc(*a, matmul_nt(g, vb));
                }
                if wants(*b) {
                    acc(*b, matmul_tn(va, g));
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, hadamard(g, self.value(*b)));
                }
                if wants(*b) {
                    acc(*b, hadamard(g, self.value(*a)));
                }
            }
            Op::ScalarMul(a, s) => acc(*a, g.map(|x| x * s)),
            Op::AddRow(m, v) => {
                if wants(*m) {
                    acc(*m, g.clone());
                }
                if wants(*v) {
                    let cols = g.cols();
                    let mut col_sums = vec![0.0; cols];
                    for row in g.data().chunks(cols) {
                        for (s, x) in col_sums.iter_mut().zip(row) {
                            *s += x;
                        }
                    }
                    acc(*v, Tensor::column(&col_sums));
                }
            }
            Op::Concat(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let n = pv.rows() * cols;
                    if wants(p) {
                        let slice = g.data()[offset..offset + n].to_vec();
                        acc(p, Tensor::new(pv.rows(), cols, slice).expect("slice shape"));
                    }
                    offset += n;
                }
            }
            Op::Reshape(a) => {
                let pv = self.value(*a);
                acc(
                    *a,
                    Tensor::new(pv.rows(), pv.cols(), g.data().to_vec()).expect("same length"),
                );
            }
            Op::Transpose(a) => acc(*a, g.transposed()),
            Op::Tanh(a) => acc(*a, zip(g, y, |gi, yi| gi * (1.0 - yi * yi))),
            Op::Sigmoid(a) => acc(*a, zip(g, y, |gi, yi| gi * yi * (1.0 - yi))),
            Op::Exp(a) => acc(*a, zip(g, y, |gi, yi| gi * yi)),
            Op::Softmax(x) => {
                let inner: f64 = g.data().iter().zip(y.data()).map(|(gi, yi)| gi * yi).sum();
                acc(*x, zip(g, y, |gi, yi| yi * (gi - inner)));
            }
            Op::Embedding { table, index } => {
                let tv = self.value(*table);
                let mut t = Tensor::zeros(tv.rows(), tv.cols());
                let cols = tv.cols();
                t.data_mut()[index * cols..(index + 1) * cols].copy_from_slice(g.data());
                acc(*table, t);
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                acc(*x, Tensor::new(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::MaskedFill { x, filled } => {
                let data = g
                    .data()
                    .iter()
                    .zip(filled)
                    .map(|(&a, &f)| if f { 0.0 } else { a })
                    .collect();
                acc(*x, Tensor::new(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::Sum(a) => {
                let pv = self.value(*a);
                acc(*a, Tensor::filled(pv.rows(), pv.cols(), g.item()));
            }
            Op::SoftmaxXent {
                logits,
                target,
                probs,
            } => {
                let s = g.item();
                let mut d: Vec<f64> = probs.iter().map(|p| p * s).collect();
                d[*target] -= s;
                acc(*logits, Tensor::column(&d));
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, t: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.rows(), a.cols(), data).expect("shape")
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    zip(a, b, |x, y| x * y)
}

/// `g · bᵀ`
fn matmul_nt(g: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (g.rows(), b.rows());
    let mut out = vec![0.0; m * k];
    if g.cols() == 1 {
        for (row, &gi) in out.chunks_exact_mut(k).zip(g.data()) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o = gi * bv;
            }
        }
        return Tensor::new(m, k, out).expect("shape");
    }
    for i in 0..m {
        let g_row = g.row(i);
        for p in 0..k {
            out[i * k + p] = g_row.iter().zip(b.row(p)).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(m, k, out).expect("shape")
}

/// `aᵀ · g`
fn matmul_tn(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), g.cols());
    let mut out = vec![0.0; k * n];
    if n == 1 {
        for (row, &gi) in a.data().chunks_exact(k).zip(g.data()) {
            for (o, &av) in out.iter_mut().zip(row) {
                *o += av * gi;
            }
        }
        return Tensor::new(k, 1, out).expect("shape");
    }
    for i in 0..m {
        let g_row = g.row(i);
        for (p, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let o = &mut out[p * n..(p + 1) * n];
            for (oj, gj) in o.iter_mut().zip(g_row) {
                *oj += av * gj;
            }
        }
    }
    Tensor::new(k, n, out).expect("shape")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax over the `support` entries; `None` if the support
/// is empty.
pub fn masked_softmax(x: &[f64], support: &[bool]) -> Option<Vec<f64>> {
    let max = x
        .iter()
        .zip(support)
        .filter(|(_, &s)| s)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut out: Vec<f64> = x
        .iter()
        .zip(support)
        .map(|(&v, &s)| if s { (v - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    for o in &mut out {
        *o /= z;
    }
    Some(out)
}

fn softmax_with_log_normalizer(x: &[f64]) -> (Vec<f64>, f64) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    (exps.iter().map(|e| e / z).collect(), max + z.ln())
}
