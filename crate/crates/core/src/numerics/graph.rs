//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction: every input id is smaller than the id of the
//! node consuming it. [`Graph::backward`] walks the tape once in reverse.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::tensor::{dot, norm, Tensor};
use crate::error::{Error, Result};

/// Denominator guard for cosine similarity.
pub const COSINE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    OneMinus(NodeId),
    ScalarMul(NodeId, NodeId),
    DivScalar(NodeId, NodeId, f64),
    MatVec(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Log(NodeId, f64),
    Concat(Vec<NodeId>),
    Mean(Vec<NodeId>),
    Sum(NodeId),
    Dot(NodeId, NodeId),
    Cosine(NodeId, NodeId),
    Softmax(NodeId),
    Index(NodeId, usize),
    Stack(Vec<NodeId>),
    /// mean over rows `x_p` of a constant matrix of `relu(w x_p + b)`
    MeanAffineRelu {
        w: NodeId,
        b: NodeId,
        inputs: Arc<Tensor>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<usize, NodeId>,
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn cosine_slice(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b)).max(COSINE_EPS)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
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

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.item()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    fn vals(&self, id: NodeId) -> &[f64] {
        self.nodes[id.0].value.data()
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Constant, t)
    }

    /// Leaf for trainable parameter `id`. Registering the same id twice
    /// returns the first node.
    pub fn param(&mut self, id: usize, t: &Tensor) -> NodeId {
        if let Some(&n) = self.params.get(&id) {
            return n;
        }
        let n = self.push(Op::Param, t.clone());
        self.params.insert(id, n);
        n
    }

    fn same_len(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        let (la, lb) = (self.vals(a).len(), self.vals(b).len());
        check(la == lb, || format!("{what}: length mismatch {la} vs {lb}"))
    }

    fn zip(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va
            .data()
            .iter()
            .zip(self.vals(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data).expect("shape preserved");
        self.push(op, t)
    }

    fn map(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let va = &self.nodes[a.0].value;
        let data = va.data().iter().map(|x| f(*x)).collect();
        let t = Tensor::new(va.shape().to_vec(), data).expect("shape preserved");
        self.push(op, t)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b, "add")?;
        Ok(self.zip(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b, "sub")?;
        Ok(self.zip(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b, "mul")?;
        Ok(self.zip(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map(a, Op::Scale(a, c), |x| c * x)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::OneMinus(a), |x| 1.0 - x)
    }

    /// Scalar node `s` times tensor `v`.
    pub fn scalar_mul(&mut self, s: NodeId, v: NodeId) -> Result<NodeId> {
        check(self.value(s).is_scalar(), || "scalar_mul: first input must be a scalar".into())?;
        let c = self.scalar(s);
        Ok(self.map(v, Op::ScalarMul(s, v), |x| c * x))
    }

    /// `v / max(s, floor)` for a scalar node `s`.
    pub fn div_scalar(&mut self, v: NodeId, s: NodeId, floor: f64) -> Result<NodeId> {
        check(self.value(s).is_scalar(), || "div_scalar: divisor must be a scalar".into())?;
        let d = self.scalar(s).max(floor);
        Ok(self.map(v, Op::DivScalar(v, s, floor), |x| x / d))
    }

    /// Matrix `[m, n]` times vector `[n]`.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let wt = self.value(w);
        check(wt.shape().len() == 2, || format!("matvec: weight must be 2-D, got {:?}", wt.shape()))?;
        let (m, n) = (wt.shape()[0], wt.shape()[1]);
        let xl = self.vals(x).len();
        check(xl == n, || format!("matvec: weight is {m}x{n}, input has length {xl}"))?;
        let xv = self.vals(x);
        let out: Vec<f64> = (0..m).map(|r| dot(wt.row(r), xv)).collect();
        Ok(self.push(Op::MatVec(w, x), Tensor::vector(out)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    /// `ln(max(a, floor))`; the gradient is zero where the floor is active.
    pub fn log(&mut self, a: NodeId, floor: f64) -> NodeId {
        self.map(a, Op::Log(a, floor), |x| x.max(floor).ln())
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        check(!parts.is_empty(), || "concat: no inputs".into())?;
        let data: Vec<f64> = parts.iter().flat_map(|p| self.vals(*p).iter().copied()).collect();
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(data)))
    }

    /// Elementwise mean of equally-sized tensors.
    pub fn mean(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        check(!parts.is_empty(), || "mean: no inputs".into())?;
        let n = self.vals(parts[0]).len();
        for p in parts {
            self.same_len(parts[0], *p, "mean")?;
        }
        let mut acc = vec![0.0; n];
        for p in parts {
            for (a, v) in acc.iter_mut().zip(self.vals(*p)) {
                *a += v;
            }
        }
        let k = parts.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        let shape = self.value(parts[0]).shape().to_vec();
        Ok(self.push(Op::Mean(parts.to_vec()), Tensor::new(shape, acc)?))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.vals(a).iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b, "dot")?;
        let s = dot(self.vals(a), self.vals(b));
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(s)))
    }

    /// `a·b / max(‖a‖‖b‖, COSINE_EPS)`.
    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_len(a, b, "cosine")?;
        check(!self.vals(a).is_empty(), || "cosine: empty vectors".into())?;
        let s = cosine_slice(self.vals(a), self.vals(b));
        Ok(self.push(Op::Cosine(a, b), Tensor::scalar(s)))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        check(!self.vals(a).is_empty(), || "softmax: empty input".into())?;
        let y = softmax_slice(self.vals(a));
        Ok(self.push(Op::Softmax(a), Tensor::vector(y)))
    }

    pub fn index(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let n = self.vals(a).len();
        check(i < n, || format!("index {i} out of range for length {n}"))?;
        let v = self.vals(a)[i];
        Ok(self.push(Op::Index(a, i), Tensor::scalar(v)))
    }

    /// Stacks scalar nodes into a vector.
    pub fn stack(&mut self, scalars: &[NodeId]) -> Result<NodeId> {
        check(!scalars.is_empty(), || "stack: no inputs".into())?;
        for s in scalars {
            check(self.value(*s).is_scalar(), || "stack: inputs must be scalars".into())?;
        }
        let data = scalars.iter().map(|s| self.scalar(*s)).collect();
        Ok(self.push(Op::Stack(scalars.to_vec()), Tensor::vector(data)))
    }

    /// Mean over the rows `x_p` of a constant `[P, n]` matrix of
    /// `relu(w x_p + b)`, with `w: [m, n]` and `b: [m]`.
    pub fn mean_affine_relu(&mut self, w: NodeId, b: NodeId, inputs: Arc<Tensor>) -> Result<NodeId> {
        let wt = self.value(w);
        check(wt.shape().len() == 2, || "mean_affine_relu: weight must be 2-D".into())?;
        let (m, n) = (wt.shape()[0], wt.shape()[1]);
        check(self.vals(b).len() == m, || "mean_affine_relu: bias length mismatch".into())?;
        check(inputs.cols() == n, || {
            format!("mean_affine_relu: inputs have {} columns, weight expects {n}", inputs.cols())
        })?;
        let bias = self.vals(b);
        let rows = inputs.rows();
        let mut out = vec![0.0; m];
        for p in 0..rows {
            let x = inputs.row(p);
            for (r, o) in out.iter_mut().enumerate() {
                let pre = dot(wt.row(r), x) + bias[r];
                if pre > 0.0 {
                    *o += pre;
                }
            }
        }
        out.iter_mut().for_each(|o| *o /= rows as f64);
        Ok(self.push(Op::MeanAffineRelu { w, b, inputs }, Tensor::vector(out)))
    }

    /// Reverse pass from a scalar seed node.
    pub fn backward(&self, seed: NodeId) -> Result<Gradients> {
        check(seed.0 < self.nodes.len(), || "backward: unknown seed node".into())?;
        check(self.value(seed).is_scalar(), || {
            format!("backward: seed must be a scalar, got shape {:?}", self.value(seed).shape())
        })?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; seed.0 + 1];
        grads[seed.0] = Some(vec![1.0]);

        fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize, f: impl Fn(usize) -> f64) {
            let slot = grads[id.0].get_or_insert_with(|| vec![0.0; len]);
            for (i, s) in slot.iter_mut().enumerate() {
                *s += f(i);
            }
        }

        for i in (0..=seed.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = node.value.data();
            match &node.op {
                Op::Constant | Op::Param => {}
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.len(), |k| g[k]);
                    acc(&mut grads, *b, g.len(), |k| g[k]);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.len(), |k| g[k]);
                    acc(&mut grads, *b, g.len(), |k| -g[k]);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.vals(*a), self.vals(*b));
                    acc(&mut grads, *a, g.len(), |k| g[k] * vb[k]);
                    acc(&mut grads, *b, g.len(), |k| g[k] * va[k]);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.len(), |k| c * g[k]),
                Op::OneMinus(a) => acc(&mut grads, *a, g.len(), |k| -g[k]),
                Op::ScalarMul(s, v) => {
                    let c = self.scalar(*s);
                    let vv = self.vals(*v);
                    let ds = dot(&g, vv);
                    acc(&mut grads, *s, 1, |_| ds);
                    acc(&mut grads, *v, g.len(), |k| c * g[k]);
                }
                Op::DivScalar(v, s, floor) => {
                    let raw = self.scalar(*s);
                    let d = raw.max(*floor);
                    acc(&mut grads, *v, g.len(), |k| g[k] / d);
                    if raw > *floor {
                        // y = v / s  =>  dy/ds = -y / s
                        let ds = -dot(&g, y) / d;
                        acc(&mut grads, *s, 1, |_| ds);
                    }
                }
                Op::MatVec(w, x) => {
                    let wt = self.value(*w);
                    let xv = self.vals(*x);
                    let n = xv.len();
                    acc(&mut grads, *w, wt.len(), |k| g[k / n] * xv[k % n]);
                    acc(&mut grads, *x, n, |c| (0..g.len()).map(|r| g[r] * wt.row(r)[c]).sum());
                }
                Op::Relu(a) => {
                    let va = self.vals(*a);
                    acc(&mut grads, *a, g.len(), |k| if va[k] > 0.0 { g[k] } else { 0.0 });
                }
                Op::Sigmoid(a) => acc(&mut grads, *a, g.len(), |k| g[k] * y[k] * (1.0 - y[k])),
                Op::Tanh(a) => acc(&mut grads, *a, g.len(), |k| g[k] * (1.0 - y[k] * y[k])),
                Op::Log(a, floor) => {
                    let va = self.vals(*a);
                    acc(&mut grads, *a, g.len(), |k| if va[k] > *floor { g[k] / va[k] } else { 0.0 });
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let l = self.vals(*p).len();
                        acc(&mut grads, *p, l, |k| g[off + k]);
                        off += l;
                    }
                }
                Op::Mean(parts) => {
                    let k = parts.len() as f64;
                    for p in parts {
                        acc(&mut grads, *p, g.len(), |j| g[j] / k);
                    }
                }
                Op::Sum(a) => {
                    let l = self.vals(*a).len();
                    acc(&mut grads, *a, l, |_| g[0]);
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (self.vals(*a), self.vals(*b));
                    acc(&mut grads, *a, va.len(), |k| g[0] * vb[k]);
                    acc(&mut grads, *b, vb.len(), |k| g[0] * va[k]);
                }
                Op::Cosine(a, b) => {
                    let (va, vb) = (self.vals(*a), self.vals(*b));
                    let (na, nb) = (norm(va), norm(vb));
                    let c = y[0];
                    if na * nb > COSINE_EPS {
                        // dc/da = b/(|a||b|) - c a/|a|^2
                        let den = na * nb;
                        acc(&mut grads, *a, va.len(), |k| g[0] * (vb[k] / den - c * va[k] / (na * na)));
                        acc(&mut grads, *b, vb.len(), |k| g[0] * (va[k] / den - c * vb[k] / (nb * nb)));
                    } else {
                        acc(&mut grads, *a, va.len(), |k| g[0] * vb[k] / COSINE_EPS);
                        acc(&mut grads, *b, vb.len(), |k| g[0] * va[k] / COSINE_EPS);
                    }
                }
                Op::Softmax(a) => {
                    let gy = dot(&g, y);
                    acc(&mut grads, *a, g.len(), |k| y[k] * (g[k] - gy));
                }
                Op::Index(a, idx) => {
                    let l = self.vals(*a).len();
                    acc(&mut grads, *a, l, |k| if k == *idx { g[0] } else { 0.0 });
                }
                Op::Stack(parts) => {
                    for (k, p) in parts.iter().enumerate() {
                        acc(&mut grads, *p, 1, |_| g[k]);
                    }
                }
                Op::MeanAffineRelu { w, b, inputs } => {
                    let wt = self.value(*w);
                    let bias = self.vals(*b);
                    let (m, n) = (wt.shape()[0], wt.shape()[1]);
                    let rows = inputs.rows();
                    let scale = 1.0 / rows as f64;
                    let mut gw = vec![0.0; m * n];
                    let mut gb = vec![0.0; m];
                    for p in 0..rows {
                        let x = inputs.row(p);
                        for r in 0..m {
                            if dot(wt.row(r), x) + bias[r] > 0.0 {
                                let gr = g[r] * scale;
                                gb[r] += gr;
                                for (gwk, xk) in gw[r * n..(r + 1) * n].iter_mut().zip(x) {
                                    *gwk += gr * xk;
                                }
                            }
                        }
                    }
                    acc(&mut grads, *w, m * n, |k| gw[k]);
                    acc(&mut grads, *b, m, |k| gb[k]);
                }
            }
            grads[i] = Some(g);
        }

        let mut by_param = BTreeMap::new();
        for (&pid, &node) in &self.params {
            if let Some(Some(g)) = grads.get(node.0) {
                let shape = self.value(node).shape().to_vec();
                by_param.insert(pid, Tensor::new(shape, g.clone())?);
            }
        }
        Ok(Gradients {
            nodes: grads,
            by_param,
        })
    }
}

/// Result of a reverse pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    by_param: BTreeMap<usize, Tensor>,
}

impl Gradients {
    /// Gradient for a parameter id, if the parameter reached the seed.
    pub fn param(&self, id: usize) -> Option<&Tensor> {
        self.by_param.get(&id)
    }

    /// Gradient with respect to any node; zeros if the node did not
    /// influence the seed.
    pub fn node(&self, graph: &Graph, id: NodeId) -> Tensor {
        match self.nodes.get(id.0) {
            Some(Some(g)) => Tensor::new(graph.value(id).shape().to_vec(), g.clone()).expect("shape"),
            _ => Tensor::zeros(graph.value(id).shape()),
        }
    }

    /// Dense gradient list aligned with `params`, zero for untouched entries.
    pub fn dense(&self, params: &[Tensor]) -> Vec<Tensor> {
        params
            .iter()
            .enumerate()
            .map(|(i, p)| self.by_param.get(&i).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect()
    }

    /// Adds `scale * grad` into `sink` for every touched parameter.
    pub fn accumulate_into(&self, sink: &mut [Tensor], scale: f64) {
        for (&pid, g) in &self.by_param {
            for (s, v) in sink[pid].data_mut().iter_mut().zip(g.data()) {
                *s += scale * v;
            }
        }
    }
}
