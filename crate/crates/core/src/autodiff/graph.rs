//! Tape of tensor operations recorded during a forward pass.
//!
//! Nodes are appended in evaluation order, so the tape is already
//! topologically sorted and [`Graph::backward`] is a single reverse sweep.
//! A graph borrows the [`ParamStore`] it reads weights from; gradients come
//! back as a [`Gradients`] value so the store can be mutated afterwards.

use crate::autodiff::param::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_a_bt, matmul_at_b, Tensor};

/// Clamp applied to probabilities inside binary cross-entropy.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Gather { param: ParamId, rows: Vec<usize> },
    GatherMean { param: ParamId, groups: Vec<Vec<usize>> },
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulCol(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Sigmoid(NodeId),
    LeakyRelu(NodeId, f64),
    Softplus(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Softmax(NodeId),
    Concat(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Sum(NodeId),
    Mean(NodeId),
    Bce { pred: NodeId, labels: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, op_name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name));
        }
        let requires_grad = match &op {
            Op::Input => false,
            Op::Param(p) | Op::Gather { param: p, .. } | Op::GatherMean { param: p, .. } => {
                self.store.get(*p).trainable
            }
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MulCol(a, b) => self.rg(*a) || self.rg(*b),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::LeakyRelu(a, _)
            | Op::Softplus(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Square(a)
            | Op::Softmax(a)
            | Op::SliceCols(a, _)
            | Op::Sum(a)
            | Op::Mean(a) => self.rg(*a),
            Op::Concat(parts) => parts.iter().any(|p| self.rg(*p)),
            Op::Bce { pred, .. } => self.rg(*pred),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// A constant input; receives no gradient.
    pub fn input(&mut self, value: Tensor) -> Result<NodeId> {
        self.push(value, Op::Input, "input")
    }

    pub fn param(&mut self, id: ParamId) -> Result<NodeId> {
        let v = self.store.value(id).clone();
        self.push(v, Op::Param(id), "param")
    }

    /// Looks up rows of an embedding matrix.
    pub fn gather(&mut self, id: ParamId, rows: Vec<usize>) -> Result<NodeId> {
        let table = self.store.value(id);
        if table.ndim() != 2 {
            return Err(Error::shape("gather", "table must be 2-D"));
        }
        let (vocab, dim) = (table.shape()[0], table.shape()[1]);
        let mut out = Vec::with_capacity(rows.len() * dim);
        for &r in &rows {
            if r >= vocab {
                return Err(Error::shape(
                    "gather",
                    format!("row {r} out of range for vocab {vocab}"),
                ));
            }
            out.extend_from_slice(table.row(r));
        }
        let v = Tensor::new(vec![rows.len(), dim], out)?;
        self.push(v, Op::Gather { param: id, rows }, "gather")
    }

    /// Mean of embedding rows per group; an empty group yields a zero row.
    pub fn gather_mean(&mut self, id: ParamId, groups: Vec<Vec<usize>>) -> Result<NodeId> {
        let table = self.store.value(id);
        if table.ndim() != 2 {
            return Err(Error::shape("gather_mean", "table must be 2-D"));
        }
        let (vocab, dim) = (table.shape()[0], table.shape()[1]);
        let mut out = vec![0.0; groups.len() * dim];
        for (i, g) in groups.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let o = &mut out[i * dim..(i + 1) * dim];
            for &r in g {
                if r >= vocab {
                    return Err(Error::shape(
                        "gather_mean",
                        format!("row {r} out of range for vocab {vocab}"),
                    ));
                }
                for (a, b) in o.iter_mut().zip(table.row(r)) {
                    *a += b;
                }
            }
            let inv = 1.0 / g.len() as f64;
            o.iter_mut().for_each(|a| *a *= inv);
        }
        let v = Tensor::new(vec![groups.len(), dim], out)?;
        self.push(v, Op::GatherMean { param: id, groups }, "gather_mean")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = matmul(self.value(a), self.value(b))?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    /// `a [n,m] + b [m]`, broadcasting the bias over rows.
    pub fn add_bias(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ndim() != 2 || bv.len() != av.cols() {
            return Err(Error::shape(
                "add_bias",
                format!("{:?} + {:?}", av.shape(), bv.shape()),
            ));
        }
        let m = av.cols();
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(m) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let v = Tensor::new(av.shape().to_vec(), out)?;
        self.push(v, Op::AddBias(a, b), "add_bias")
    }

    fn zip_same(&self, a: NodeId, b: NodeId, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.zip_same(a, b, "add", |x, y| x + y)?;
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.zip_same(a, b, "sub", |x, y| x - y)?;
        self.push(v, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.zip_same(a, b, "mul", |x, y| x * y)?;
        self.push(v, Op::Mul(a, b), "mul")
    }

    /// Scales each row of `a [n,m]` by the matching entry of `c [n,1]`.
    pub fn mul_col(&mut self, a: NodeId, c: NodeId) -> Result<NodeId> {
        let (av, cv) = (self.value(a), self.value(c));
        if av.ndim() != 2 || cv.ndim() != 2 || cv.cols() != 1 || cv.rows() != av.rows() {
            return Err(Error::shape(
                "mul_col",
                format!("{:?} * {:?}", av.shape(), cv.shape()),
            ));
        }
        let m = av.cols();
        let mut out = av.data().to_vec();
        for (row, &s) in out.chunks_mut(m).zip(cv.data()) {
            row.iter_mut().for_each(|o| *o *= s);
        }
        let v = Tensor::new(av.shape().to_vec(), out)?;
        self.push(v, Op::MulCol(a, c), "mul_col")
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s), "scale")
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a), "add_scalar")
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a), "sigmoid")
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope), "leaky_relu")
    }

    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a), "softplus")
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a), "exp")
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a), "log")
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a), "square")
    }

    /// Row-wise softmax of a 2-D tensor.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.ndim() != 2 {
            return Err(Error::shape("softmax", format!("{:?}", av.shape())));
        }
        let m = av.cols();
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(m) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let v = Tensor::new(av.shape().to_vec(), out)?;
        self.push(v, Op::Softmax(a), "softmax")
    }

    /// Concatenates 2-D tensors with equal row counts along columns.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let n = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.ndim() != 2 || v.rows() != n {
                return Err(Error::shape("concat", format!("part shape {:?}", v.shape())));
            }
            total += v.cols();
        }
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let v = Tensor::new(vec![n, total], out)?;
        self.push(v, Op::Concat(parts.to_vec()), "concat")
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let av = self.value(a);
        if av.ndim() != 2 || start >= end || end > av.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("{start}..{end} of {:?}", av.shape()),
            ));
        }
        let n = av.rows();
        let mut out = Vec::with_capacity(n * (end - start));
        for i in 0..n {
            out.extend_from_slice(&av.row(i)[start..end]);
        }
        let v = Tensor::new(vec![n, end - start], out)?;
        self.push(v, Op::SliceCols(a, start), "slice_cols")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = av.data().iter().sum::<f64>() / av.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), "mean")
    }

    /// Mean binary cross-entropy of probabilities against 0/1 labels.
    /// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn bce(&mut self, pred: NodeId, labels: Vec<f64>) -> Result<NodeId> {
        let pv = self.value(pred);
        if pv.len() != labels.len() || labels.is_empty() {
            return Err(Error::shape(
                "bce",
                format!("{} predictions vs {} labels", pv.len(), labels.len()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidArgument(format!("label {bad} is not 0 or 1")));
        }
        let mut total = 0.0;
        for (&p, &y) in pv.data().iter().zip(&labels) {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            total -= if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
        }
        let v = Tensor::scalar(total / labels.len() as f64);
        self.push(v, Op::Bce { pred, labels }, "bce")
    }

    /// Reverse sweep from a scalar node. Consumes the graph.
    pub fn backward(self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut pgrads: Vec<Option<Tensor>> = vec![None; self.store.len()];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        fn acc(slot: &mut Option<Tensor>, g: Tensor) {
            match slot {
                Some(t) => t.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let val = |id: NodeId| &nodes[id.0].value;
            let rg = |id: NodeId| nodes[id.0].requires_grad;
            match &node.op {
                Op::Input => {}
                Op::Param(p) => acc(&mut pgrads[p.0], g),
                Op::Gather { param, rows } => {
                    let table = self.store.value(*param);
                    let dim = table.cols();
                    let slot = pgrads[param.0].get_or_insert_with(|| Tensor::zeros(table.shape()));
                    let data = slot.data_mut();
                    for (i, &r) in rows.iter().enumerate() {
                        for (d, gv) in data[r * dim..(r + 1) * dim].iter_mut().zip(g.row(i)) {
                            *d += gv;
                        }
                    }
                }
                Op::GatherMean { param, groups } => {
                    let table = self.store.value(*param);
                    let dim = table.cols();
                    let slot = pgrads[param.0].get_or_insert_with(|| Tensor::zeros(table.shape()));
                    let data = slot.data_mut();
                    for (i, grp) in groups.iter().enumerate() {
                        if grp.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / grp.len() as f64;
                        for &r in grp {
                            for (d, gv) in data[r * dim..(r + 1) * dim].iter_mut().zip(g.row(i)) {
                                *d += gv * inv;
                            }
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    if rg(*a) {
                        acc(&mut grads[a.0], matmul_a_bt(&g, val(*b)));
                    }
                    if rg(*b) {
                        acc(&mut grads[b.0], matmul_at_b(val(*a), &g));
                    }
                }
                Op::AddBias(a, b) => {
                    if rg(*b) {
                        let bv = val(*b);
                        let m = bv.len();
                        let mut gb = vec![0.0; m];
                        for row in g.data().chunks(m) {
                            for (s, v) in gb.iter_mut().zip(row) {
                                *s += v;
                            }
                        }
                        acc(&mut grads[b.0], Tensor::new(bv.shape().to_vec(), gb)?);
                    }
                    if rg(*a) {
                        acc(&mut grads[a.0], g);
                    }
                }
                Op::Add(a, b) => {
                    if rg(*b) {
                        acc(&mut grads[b.0], g.clone());
                    }
                    if rg(*a) {
                        acc(&mut grads[a.0], g);
                    }
                }
                Op::Sub(a, b) => {
                    if rg(*b) {
                        acc(&mut grads[b.0], g.map(|x| -x));
                    }
                    if rg(*a) {
                        acc(&mut grads[a.0], g);
                    }
                }
                Op::Mul(a, b) => {
                    if rg(*a) {
                        acc(&mut grads[a.0], hadamard(&g, val(*b)));
                    }
                    if rg(*b) {
                        acc(&mut grads[b.0], hadamard(&g, val(*a)));
                    }
                }
                Op::MulCol(a, c) => {
                    let (av, cv) = (val(*a), val(*c));
                    let m = av.cols();
                    if rg(*c) {
                        let gc: Vec<f64> = g
                            .data()
                            .chunks(m)
                            .zip(av.data().chunks(m))
                            .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                            .collect();
                        acc(&mut grads[c.0], Tensor::new(cv.shape().to_vec(), gc)?);
                    }
                    if rg(*a) {
                        let mut ga = g.into_data();
                        for (row, &s) in ga.chunks_mut(m).zip(cv.data()) {
                            row.iter_mut().for_each(|v| *v *= s);
                        }
                        acc(&mut grads[a.0], Tensor::new(av.shape().to_vec(), ga)?);
                    }
                }
                Op::Scale(a, s) => acc(&mut grads[a.0], g.map(|x| x * s)),
                Op::AddScalar(a) => acc(&mut grads[a.0], g),
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut grads[a.0], zip3(&g, y, |gv, yv| gv * yv * (1.0 - yv)));
                }
                Op::LeakyRelu(a, slope) => {
                    let x = val(*a);
                    let s = *slope;
                    acc(&mut grads[a.0], zip3(&g, x, |gv, xv| if xv > 0.0 { gv } else { s * gv }));
                }
                Op::Softplus(a) => {
                    acc(&mut grads[a.0], zip3(&g, val(*a), |gv, xv| gv * sigmoid(xv)));
                }
                Op::Exp(a) => acc(&mut grads[a.0], hadamard(&g, &node.value)),
                Op::Log(a) => acc(&mut grads[a.0], zip3(&g, val(*a), |gv, xv| gv / xv)),
                Op::Square(a) => acc(&mut grads[a.0], zip3(&g, val(*a), |gv, xv| 2.0 * xv * gv)),
                Op::Softmax(a) => {
                    let y = &node.value;
                    let m = y.cols();
                    let mut ga = vec![0.0; y.len()];
                    for ((o, gr), yr) in ga.chunks_mut(m).zip(g.data().chunks(m)).zip(y.data().chunks(m)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(x, z)| x * z).sum();
                        for ((ov, gv), yv) in o.iter_mut().zip(gr).zip(yr) {
                            *ov = yv * (gv - dot);
                        }
                    }
                    acc(&mut grads[a.0], Tensor::new(y.shape().to_vec(), ga)?);
                }
                Op::Concat(parts) => {
                    let n = g.rows();
                    let mut offset = 0;
                    for p in parts {
                        let w = val(*p).cols();
                        if rg(*p) {
                            let mut gp = Vec::with_capacity(n * w);
                            for i in 0..n {
                                gp.extend_from_slice(&g.row(i)[offset..offset + w]);
                            }
                            acc(&mut grads[p.0], Tensor::new(vec![n, w], gp)?);
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let av = val(*a);
                    let (n, m, w) = (av.rows(), av.cols(), g.cols());
                    let mut ga = vec![0.0; n * m];
                    for i in 0..n {
                        ga[i * m + start..i * m + start + w].copy_from_slice(g.row(i));
                    }
                    acc(&mut grads[a.0], Tensor::new(av.shape().to_vec(), ga)?);
                }
                Op::Sum(a) => {
                    let gv = g.data()[0];
                    acc(&mut grads[a.0], Tensor::full(val(*a).shape(), gv));
                }
                Op::Mean(a) => {
                    let av = val(*a);
                    let gv = g.data()[0] / av.len() as f64;
                    acc(&mut grads[a.0], Tensor::full(av.shape(), gv));
                }
                Op::Bce { pred, labels } => {
                    let pv = val(*pred);
                    let scale = g.data()[0] / labels.len() as f64;
                    let gp: Vec<f64> = pv
                        .data()
                        .iter()
                        .zip(labels)
                        .map(|(&p, &y)| {
                            if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
                                0.0
                            } else {
                                scale * (p - y) / (p * (1.0 - p))
                            }
                        })
                        .collect();
                    acc(&mut grads[pred.0], Tensor::new(pv.shape().to_vec(), gp)?);
                }
            }
        }
        for g in pgrads.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::NonFinite("backward"));
            }
        }
        Ok(Gradients { grads: pgrads })
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    zip3(a, b, |x, y| x * y)
}

fn zip3(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(v));
        (s, id)
    }

    #[test]
    fn sigmoid_at_zero() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.input(Tensor::scalar(0.0)).unwrap();
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5]);
    }

    #[test]
    fn leaky_relu_negative() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.input(Tensor::scalar(-1.0)).unwrap();
        let y = g.leaky_relu(x, 0.01).unwrap();
        assert_eq!(g.value(y).data(), &[-0.01]);
    }

    #[test]
    fn softmax_equal_logits() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.input(Tensor::from_rows(&[vec![3.7, 3.7]]).unwrap()).unwrap();
        let y = g.softmax(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn linear_derivative() {
        let (s, w) = store_with(2.0);
        let mut g = Graph::new(&s);
        let wn = g.param(w).unwrap();
        let y = g.scale(wn, 3.0).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[3.0]);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let (s, w) = store_with(0.0);
        let mut g = Graph::new(&s);
        let wn = g.param(w).unwrap();
        let y = g.sigmoid(wn).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[0.25]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut s = ParamStore::new();
        let w = s.add("w", Tensor::zeros(&[2, 2]));
        let mut g = Graph::new(&s);
        let wn = g.param(w).unwrap();
        assert!(matches!(g.backward(wn), Err(Error::NotScalar(_))));
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let (mut s, w) = store_with(1.5);
        s.set_trainable(w, false);
        let mut g = Graph::new(&s);
        let wn = g.param(w).unwrap();
        let y = g.square(wn).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.get(w).is_none());
        s.accumulate(&grads);
        assert_eq!(s.get(w).gradient.data(), &[0.0]);
    }

    #[test]
    fn log_of_zero_is_non_finite() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let x = g.input(Tensor::scalar(0.0)).unwrap();
        assert!(matches!(g.log(x), Err(Error::NonFinite("log"))));
    }

    #[test]
    fn shape_mismatch_reported() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let a = g.input(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.input(Tensor::zeros(&[3, 2])).unwrap();
        assert!(matches!(g.add(a, b), Err(Error::Shape { .. })));
        assert!(g.matmul(a, b).is_ok());
    }

    #[test]
    fn bce_rejects_bad_label() {
        let s = ParamStore::new();
        let mut g = Graph::new(&s);
        let p = g.input(Tensor::column(vec![0.5])).unwrap();
        assert!(g.bce(p, vec![2.0]).is_err());
    }

    #[test]
    fn gather_accumulates_repeated_rows() {
        let mut s = ParamStore::new();
        let t = s.add("emb", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let mut g = Graph::new(&s);
        let x = g.gather(t, vec![1, 1, 0]).unwrap();
        let y = g.sum(x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(t).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
