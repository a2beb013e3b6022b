//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. Nodes only
//! reference earlier nodes, so tape order is a topological order and the
//! backward pass is a single reverse sweep.

use std::rc::Rc;

use super::params::{ParamGrads, ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        // per-row normalised input and 1/σ
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Rc<[usize]>),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Rc<[usize]>,
        probs: Vec<f64>,
        live: Vec<bool>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Leaf => "leaf",
            Op::Param => "param",
            Op::MatMul(..) => "matmul",
            Op::MatMulBt(..) => "matmul_bt",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::Gelu(_) => "gelu",
            Op::SoftmaxRows(_) => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::ConcatRows(_) => "concat_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::Sum(_) => "sum",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Probability floor applied when the target class underflows to zero.
pub const PROB_FLOOR: f64 = 1e-30;

/// Recording context for one forward pass against a fixed parameter set.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    bound: Vec<Option<Var>>,
    nonfinite: Option<String>,
    clamped: usize,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            bound: vec![None; params.len()],
            nonfinite: None,
            clamped: 0,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Number of cross-entropy rows whose target probability underflowed
    /// and was floored at [`PROB_FLOOR`].
    pub fn clamped_rows(&self) -> usize {
        self.clamped
    }

    /// Errors if any recorded forward value was NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match &self.nonfinite {
            Some(op) => Err(Error::NonFinite(op.clone())),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Constant => false,
            Op::Leaf | Op::Param => true,
            other => parents(other).iter().any(|p| self.nodes[p.0].needs_grad),
        };
        if self.nonfinite.is_none() && !value.is_finite() {
            self.nonfinite = Some(op.name().to_string());
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// A free variable that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Binds a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param);
        self.bound[id.0] = Some(v);
        v
    }

    fn dims2(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims2(a);
        let (k2, n) = self.dims2(b);
        assert_eq!(k, k2, "matmul inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, m, k, n, false, false);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    /// `a[m×k] · b[n×k]ᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims2(a);
        let (n, k2) = self.dims2(b);
        assert_eq!(k, k2, "matmul_bt inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, m, k, n, false, true);
        self.push(Tensor::from_parts(vec![m, n], out), Op::MatMulBt(a, b))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "{} operand shapes", op.name());
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-`n` vector to every row of `x[m×n]`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let n = self.value(x).cols();
        assert_eq!(self.value(b).len(), n, "add_row bias length");
        let bias = self.value(b).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(bias) {
                *v += bv;
            }
        }
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::AddRow(x, b))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| gelu(v).0);
        self.push(t, Op::Gelu(x))
    }

    /// Row-wise softmax over the last axis. Columns with `keep[j] == false`
    /// get probability exactly zero. Panics if a row has no kept column.
    pub fn softmax_rows(&mut self, x: Var, keep: Option<&[bool]>) -> Var {
        let src = self.value(x);
        let n = src.cols();
        if let Some(k) = keep {
            assert_eq!(k.len(), n, "softmax mask length");
            assert!(k.iter().any(|&b| b), "softmax over fully masked row");
        }
        let mut data = src.data().to_vec();
        for row in data.chunks_mut(n) {
            let live = |j: usize| keep.is_none_or(|k| k[j]);
            let max = (0..n)
                .filter(|&j| live(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (j, v) in row.iter_mut().enumerate() {
                if live(j) {
                    *v = (*v - max).exp();
                    total += *v;
                } else {
                    *v = 0.0;
                }
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let shape = src.shape().to_vec();
        self.push(Tensor::from_parts(shape, data), Op::SoftmaxRows(x))
    }

    /// Row-wise layer normalisation with per-column gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let src = self.value(x);
        let n = src.cols();
        assert_eq!(self.value(gain).len(), n, "layer_norm gain length");
        assert_eq!(self.value(bias).len(), n, "layer_norm bias length");
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = Vec::with_capacity(src.len());
        let mut inv_std = Vec::with_capacity(src.rows());
        let mut out = Vec::with_capacity(src.len());
        for row in src.data().chunks(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mean) * is;
                xhat.push(h);
                out.push(g[j] * h + b[j]);
            }
        }
        let shape = src.shape().to_vec();
        self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let n = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), n, "concat_rows column mismatch");
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        self.push(
            Tensor::from_parts(vec![rows, n], data),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    /// Joins matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let m = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; m * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let t = self.value(p);
            assert_eq!(t.rows(), m, "concat_cols row mismatch");
            for i in 0..m {
                data[i * total + offset..i * total + offset + w].copy_from_slice(t.row(i));
            }
            offset += w;
        }
        self.push(
            Tensor::from_parts(vec![m, total], data),
            Op::ConcatCols(parts.to_vec()),
        )
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let (m, n) = (t.rows(), t.cols());
        assert!(start + len <= n && len > 0, "slice_cols out of range");
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&t.row(i)[start..start + len]);
        }
        self.push(Tensor::from_parts(vec![m, len], data), Op::SliceCols(x, start))
    }

    /// Selects rows by index (repeats allowed); doubles as embedding lookup.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Var {
        assert!(!idx.is_empty(), "gather_rows with no indices");
        let t = self.value(x);
        let n = t.cols();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            assert!(i < t.rows(), "gather_rows index {i} out of {} rows", t.rows());
            data.extend_from_slice(t.row(i));
        }
        self.push(
            Tensor::from_parts(vec![idx.len(), n], data),
            Op::GatherRows(x, idx.into()),
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Mean over rows of `-log softmax(logits)[row, target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let t = self.value(logits);
        let (m, n) = (t.rows(), t.cols());
        assert_eq!(targets.len(), m, "one target per row");
        let mut probs = Vec::with_capacity(m * n);
        let mut live = Vec::with_capacity(m);
        let mut total = 0.0;
        let mut clamped = 0;
        for (row, &target) in t.data().chunks(n).zip(targets) {
            assert!(target < n, "target {target} out of {n} classes");
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + z.ln();
            probs.extend(row.iter().map(|v| (v - max).exp() / z));
            let nll = lse - row[target];
            if (-nll).exp() == 0.0 {
                clamped += 1;
                live.push(false);
                total += -PROB_FLOOR.ln();
            } else {
                live.push(true);
                total += nll;
            }
        }
        self.clamped += clamped;
        self.push(
            Tensor::scalar(total / m as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.into(),
                probs,
                live,
            },
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        let by_node = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| Tensor::from_parts(n.value.shape().to_vec(), g)))
            .collect();
        Ok(Gradients {
            by_node,
            bound: self.bound.clone(),
        })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
            f(slot);
        };
        match op {
            Op::Constant | Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).cols();
                acc(*a, &mut |da| gemm(g, val(*b).data(), da, m, n, k, false, true));
                acc(*b, &mut |db| gemm(val(*a).data(), g, db, k, m, n, true, false));
            }
            Op::MatMulBt(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).rows();
                acc(*a, &mut |da| gemm(g, val(*b).data(), da, m, n, k, false, false));
                acc(*b, &mut |db| gemm(g, val(*a).data(), db, n, m, k, true, false));
            }
            Op::Add(a, b) => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| add_into(db, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| db.iter_mut().zip(g).for_each(|(d, gv)| *d -= gv));
            }
            Op::Mul(a, b) => {
                acc(*a, &mut |da| {
                    for ((d, gv), bv) in da.iter_mut().zip(g).zip(val(*b).data()) {
                        *d += gv * bv;
                    }
                });
                acc(*b, &mut |db| {
                    for ((d, gv), av) in db.iter_mut().zip(g).zip(val(*a).data()) {
                        *d += gv * av;
                    }
                });
            }
            Op::AddRow(x, b) => {
                acc(*x, &mut |dx| add_into(dx, g));
                let n = out.cols();
                acc(*b, &mut |db| {
                    for row in g.chunks(n) {
                        add_into(db, row);
                    }
                });
            }
            Op::Scale(x, s) => {
                acc(*x, &mut |dx| dx.iter_mut().zip(g).for_each(|(d, gv)| *d += s * gv));
            }
            Op::Gelu(x) => {
                acc(*x, &mut |dx| {
                    for ((d, gv), xv) in dx.iter_mut().zip(g).zip(val(*x).data()) {
                        *d += gv * gelu(*xv).1;
                    }
                });
            }
            Op::SoftmaxRows(x) => {
                let n = out.cols();
                acc(*x, &mut |dx| {
                    for ((drow, grow), yrow) in
                        dx.chunks_mut(n).zip(g.chunks(n)).zip(out.data().chunks(n))
                    {
                        let inner: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += y * (gv - inner);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let n = out.cols();
                let gv = val(*gain).data();
                acc(*x, &mut |dx| {
                    for (r, (drow, grow)) in dx.chunks_mut(n).zip(g.chunks(n)).enumerate() {
                        let h = &xhat[r * n..(r + 1) * n];
                        let dh: Vec<f64> = grow.iter().zip(gv).map(|(a, b)| a * b).collect();
                        let mean_dh = dh.iter().sum::<f64>() / n as f64;
                        let mean_dh_h =
                            dh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            drow[j] += inv_std[r] * (dh[j] - mean_dh - h[j] * mean_dh_h);
                        }
                    }
                });
                acc(*gain, &mut |dg| {
                    for (grow, h) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            dg[j] += grow[j] * h[j];
                        }
                    }
                });
                acc(*bias, &mut |db| {
                    for grow in g.chunks(n) {
                        add_into(db, grow);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    acc(p, &mut |dp| add_into(dp, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    acc(p, &mut |dp| {
                        for (i, drow) in dp.chunks_mut(w).enumerate() {
                            add_into(drow, &g[i * total + offset..i * total + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(x, start) => {
                let n = val(*x).cols();
                let w = out.cols();
                acc(*x, &mut |dx| {
                    for (drow, grow) in dx.chunks_mut(n).zip(g.chunks(w)) {
                        add_into(&mut drow[*start..*start + w], grow);
                    }
                });
            }
            Op::GatherRows(x, idx) => {
                let n = out.cols();
                acc(*x, &mut |dx| {
                    for (&i, grow) in idx.iter().zip(g.chunks(n)) {
                        add_into(&mut dx[i * n..(i + 1) * n], grow);
                    }
                });
            }
            Op::Sum(x) => {
                acc(*x, &mut |dx| dx.iter_mut().for_each(|d| *d += g[0]));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                live,
            } => {
                let n = val(*logits).cols();
                let m = targets.len() as f64;
                acc(*logits, &mut |dl| {
                    for (r, drow) in dl.chunks_mut(n).enumerate() {
                        if !live[r] {
                            continue;
                        }
                        for j in 0..n {
                            let onehot = if j == targets[r] { 1.0 } else { 0.0 };
                            drow[j] += g[0] * (probs[r * n + j] - onehot) / m;
                        }
                    }
                });
            }
        }
    }
}

fn parents(op: &Op) -> Vec<Var> {
    match op {
        Op::Constant | Op::Leaf | Op::Param => vec![],
        Op::MatMul(a, b)
        | Op::MatMulBt(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::AddRow(a, b) => vec![*a, *b],
        Op::Scale(x, _)
        | Op::Gelu(x)
        | Op::SoftmaxRows(x)
        | Op::SliceCols(x, _)
        | Op::GatherRows(x, _)
        | Op::Sum(x) => vec![*x],
        Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
        Op::ConcatRows(p) | Op::ConcatCols(p) => p.clone(),
        Op::CrossEntropy { logits, .. } => vec![*logits],
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// GELU value and derivative (tanh approximation).
fn gelu(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const A: f64 = 0.044_715;
    let u = C * (x + A * x * x * x);
    let t = u.tanh();
    let value = 0.5 * x * (1.0 + t);
    let du = C * (1.0 + 3.0 * A * x * x);
    let deriv = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    (value, deriv)
}

/// Result of a backward sweep.
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
    bound: Vec<Option<Var>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` if the loss does not
    /// depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.by_node.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients for every parameter in `store`, zero-filled where the
    /// parameter was never bound or does not reach the loss.
    pub fn param_grads(&self, store: &ParamStore) -> ParamGrads {
        let grads = store
            .iter()
            .map(|(id, _, value)| {
                self.bound
                    .get(id.0)
                    .copied()
                    .flatten()
                    .and_then(|v| self.wrt(v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(value.shape()))
            })
            .collect();
        ParamGrads::from_vec(grads)
    }
}
