//! Tape-based reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and backward simply walks it in reverse.

use std::collections::HashMap;
use std::str::FromStr;

use super::params::{ParamId, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Layer-norm variance epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rules that can be deliberately broken to exercise the gradient
/// checker. Only ever set by tests and `gradcheck --inject-fault`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardFault {
    MatMul,
    Softmax,
    LayerNorm,
    Gelu,
}

impl FromStr for BackwardFault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matmul" => Ok(BackwardFault::MatMul),
            "softmax" => Ok(BackwardFault::Softmax),
            "layer_norm" | "layernorm" => Ok(BackwardFault::LayerNorm),
            "gelu" => Ok(BackwardFault::Gelu),
            other => Err(Error::Config(format!("unknown backward fault '{other}'"))),
        }
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, T),
    Gelu(Var),
    Sigmoid(Var),
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    MeanPool {
        x: Var,
        axes: Vec<usize>,
    },
    Reshape(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mse {
        pred: Var,
        target: Tensor<T>,
    },
    SparseCrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Record of one forward evaluation, differentiable by [`Graph::backward`].
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    fault: Option<BackwardFault>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
            fault: None,
        }
    }

    pub fn inject_fault(&mut self, fault: BackwardFault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Differentiable leaf not tied to a parameter store.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Differentiable leaf holding a copy of a stored parameter. Requesting
    /// the same parameter twice yields the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.leaf(store.get(id).clone());
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Adds the gradient of every parameter touched by this graph into
    /// `buffer`, which is indexed in store order.
    pub fn accumulate_param_grads(&self, buffer: &mut [Tensor<T>]) -> Result<()> {
        let mut touched: Vec<(ParamId, Var)> = self.params.iter().map(|(&p, &v)| (p, v)).collect();
        touched.sort_by_key(|(p, _)| *p);
        for (pid, var) in touched {
            if let Some(g) = &self.nodes[var.0].grad {
                buffer[pid.index()].add_assign(g)?;
            }
        }
        Ok(())
    }

    // ---- operations -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new([m, n], out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.value(x).dims2("transpose")?;
        let out = kernels::transpose(self.value(x).data(), r, c);
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new([c, r], out)?, Op::Transpose(x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", self.shape(a), self.shape(b)));
        }
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("mul", self.shape(a), self.shape(b)));
        }
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// Adds a `[d]` bias to every row of an `[..., d]` tensor. This is the
    /// only broadcasting operation.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = *self.shape(x).last().expect("non-empty shape");
        if self.shape(bias) != [d] {
            return Err(Error::shape("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(d) {
            for (o, &bv) in row.iter_mut().zip(&b) {
                *o = *o + bv;
            }
        }
        let rg = self.needs(&[x, bias]);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    /// `x · w + b` for `x: [n, d_in]`, `w: [d_in, d_out]`, `b: [d_out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add_bias(h, b)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let rg = self.needs(&[x]);
        self.push(out, Op::Scale(x, factor), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu_fwd);
        let rg = self.needs(&[x]);
        self.push(out, Op::Gelu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.needs(&[x]);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// Softmax along `axis`, with max-subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::invalid(
                "softmax",
                format!("axis {axis} out of range for shape {shape:?}"),
            ));
        }
        if self.value(x).data().iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite {
                context: "softmax input".into(),
            });
        }
        let (outer, n, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let mut max = T::neg_infinity();
                for j in 0..n {
                    max = max.max(src[at(j)]);
                }
                let mut total = T::zero();
                for j in 0..n {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    total = total + e;
                }
                for j in 0..n {
                    out[at(j)] = out[at(j)] / total;
                }
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { x, axis }, rg))
    }

    /// Normalizes the last axis to zero mean and unit variance, then applies
    /// a per-feature gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().expect("non-empty shape");
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::shape("layer_norm", &shape, self.shape(gain)));
        }
        let eps = T::cast_from(LAYER_NORM_EPS);
        let dn = T::from_usize(d).expect("extent fits");
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let src = self.value(x).data();
        let rows = src.len() / d;
        let mut xhat = vec![T::zero(); src.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let rg = self.needs(&[x, gain, bias]);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Mean over the listed axes; those axes are removed from the shape
    /// (pooling every axis yields shape `[1]`).
    pub fn mean_pool(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.is_empty() || axes.iter().any(|&a| a >= shape.len()) {
            return Err(Error::invalid(
                "mean_pool",
                format!("axes {axes:?} invalid for shape {shape:?}"),
            ));
        }
        let (out_shape, map) = pool_index(&shape, &axes);
        let count: usize = axes.iter().map(|&a| shape[a]).product();
        let inv = T::one() / T::from_usize(count).expect("count fits");
        let mut out = vec![T::zero(); out_shape.iter().product()];
        for (v, &o) in self.value(x).data().iter().zip(&map) {
            out[o] = out[o] + *v;
        }
        for v in &mut out {
            *v = *v * inv;
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new(out_shape, out)?, Op::MeanPool { x, axes }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshaped(shape.to_vec())?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2("slice_cols")?;
        if len == 0 || start + len > c {
            return Err(Error::invalid(
                "slice_cols",
                format!("columns {start}..{} out of range for width {c}", start + len),
            ));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for row in src.chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Tensor::new([r, len], out)?, Op::SliceCols { x, start }, rg))
    }

    /// Horizontal concatenation of 2-D tensors with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat_cols", "no inputs"));
        };
        let (r, _) = self.value(first).dims2("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.value(p).dims2("concat_cols")?;
            if pr != r {
                return Err(Error::shape("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = self.needs(parts);
        Ok(self.push(Tensor::new([r, total], out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    /// Mean squared error over every coordinate against a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        if self.shape(pred) != target.shape() {
            return Err(Error::shape("mse", self.shape(pred), target.shape()));
        }
        let n = T::from_usize(target.len()).expect("len fits");
        let total: T = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        let rg = self.needs(&[pred]);
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// `-log softmax(logits)[label]` for a single row of logits.
    pub fn sparse_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = self.value(logits).data();
        if label >= z.len() {
            return Err(Error::invalid(
                "sparse_cross_entropy",
                format!("label {label} out of range for {} classes", z.len()),
            ));
        }
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let total: T = z.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + total.ln();
        let probs: Vec<T> = z.iter().map(|&v| (v - log_z).exp()).collect();
        let loss = log_z - z[label];
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SparseCrossEntropy {
                logits,
                label,
                probs,
            },
            rg,
        ))
    }

    // ---- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar output. Gradients accumulate additively
    /// into every node that requires them.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).len() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("output must be scalar, got shape {:?}", self.shape(output)),
            ));
        }
        self.nodes[output.0].grad = Some(Tensor::ones([1]));
        for i in (0..=output.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.vjp(i, &grad)?;
            self.nodes[i].grad = Some(grad);
            for (var, g) in contributions {
                self.accumulate(var, g)?;
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, var: Var, g: Tensor<T>) -> Result<()> {
        let node = &mut self.nodes[var.0];
        if !node.requires_grad {
            return Ok(());
        }
        match &mut node.grad {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn faulty(&self, kind: BackwardFault, mut g: Tensor<T>) -> Tensor<T> {
        if self.fault == Some(kind) {
            let half = T::cast_from(0.5);
            for v in g.data_mut() {
                *v = *v * half;
            }
        }
        g
    }

    /// Vector-Jacobian products of node `i` with respect to its inputs.
    fn vjp(&self, i: usize, dy: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2("matmul")?;
                let (_, n) = self.value(*b).dims2("matmul")?;
                if self.requires_grad(*a) {
                    let da = kernels::matmul_nt(dy.data(), self.value(*b).data(), m, n, k);
                    out.push((*a, self.faulty(BackwardFault::MatMul, Tensor::new([m, k], da)?)));
                }
                if self.requires_grad(*b) {
                    let db = kernels::matmul_tn(self.value(*a).data(), dy.data(), m, k, n);
                    out.push((*b, self.faulty(BackwardFault::MatMul, Tensor::new([k, n], db)?)));
                }
            }
            Op::Transpose(x) => {
                let (r, c) = dy.dims2("transpose")?;
                out.push((*x, Tensor::new([c, r], kernels::transpose(dy.data(), r, c))?));
            }
            Op::Add(a, b) => {
                out.push((*a, dy.clone()));
                out.push((*b, dy.clone()));
            }
            Op::Mul(a, b) => {
                out.push((*a, zip_map(dy, self.value(*b), |g, v| g * v)));
                out.push((*b, zip_map(dy, self.value(*a), |g, v| g * v)));
            }
            Op::AddBias(x, bias) => {
                out.push((*x, dy.clone()));
                if self.requires_grad(*bias) {
                    let d = self.shape(*bias)[0];
                    let mut db = vec![T::zero(); d];
                    for row in dy.data().chunks(d) {
                        for (acc, &g) in db.iter_mut().zip(row) {
                            *acc = *acc + g;
                        }
                    }
                    out.push((*bias, Tensor::new([d], db)?));
                }
            }
            Op::Scale(x, s) => out.push((*x, dy.map(|g| g * *s))),
            Op::Gelu(x) => {
                let g = zip_map(dy, self.value(*x), |g, v| g * gelu_grad(v));
                out.push((*x, self.faulty(BackwardFault::Gelu, g)));
            }
            Op::Sigmoid(x) => {
                out.push((*x, zip_map(dy, y, |g, s| g * s * (T::one() - s))));
            }
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = axis_split(y.shape(), *axis);
                let (yd, gd) = (y.data(), dy.data());
                let mut dx = vec![T::zero(); yd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * n + j) * inner + i;
                        let dot: T = (0..n).map(|j| gd[at(j)] * yd[at(j)]).sum();
                        for j in 0..n {
                            dx[at(j)] = yd[at(j)] * (gd[at(j)] - dot);
                        }
                    }
                }
                let dx = Tensor::new(y.shape(), dx)?;
                out.push((*x, self.faulty(BackwardFault::Softmax, dx)));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = self.shape(*gain)[0];
                let dn = T::from_usize(d).expect("extent fits");
                let g = self.value(*gain).data();
                let gd = dy.data();
                if self.requires_grad(*gain) || self.requires_grad(*bias) {
                    let mut dgain = vec![T::zero(); d];
                    let mut dbias = vec![T::zero(); d];
                    for (grow, hrow) in gd.chunks(d).zip(xhat.chunks(d)) {
                        for j in 0..d {
                            dgain[j] = dgain[j] + grow[j] * hrow[j];
                            dbias[j] = dbias[j] + grow[j];
                        }
                    }
                    out.push((*gain, Tensor::new([d], dgain)?));
                    out.push((*bias, Tensor::new([d], dbias)?));
                }
                if self.requires_grad(*x) {
                    let mut dx = vec![T::zero(); gd.len()];
                    for (r, &is) in inv_std.iter().enumerate() {
                        let grow = &gd[r * d..(r + 1) * d];
                        let hrow = &xhat[r * d..(r + 1) * d];
                        let dh: Vec<T> = (0..d).map(|j| grow[j] * g[j]).collect();
                        let mean_dh = dh.iter().copied().sum::<T>() / dn;
                        let mean_dh_h = (0..d).map(|j| dh[j] * hrow[j]).sum::<T>() / dn;
                        for j in 0..d {
                            dx[r * d + j] = is * (dh[j] - mean_dh - hrow[j] * mean_dh_h);
                        }
                    }
                    let dx = Tensor::new(y.shape(), dx)?.reshaped(self.shape(*x).to_vec())?;
                    out.push((*x, self.faulty(BackwardFault::LayerNorm, dx)));
                }
            }
            Op::MeanPool { x, axes } => {
                let shape = self.shape(*x);
                let (_, map) = pool_index(shape, axes);
                let count: usize = axes.iter().map(|&a| shape[a]).product();
                let inv = T::one() / T::from_usize(count).expect("count fits");
                let dx: Vec<T> = map.iter().map(|&o| dy.data()[o] * inv).collect();
                out.push((*x, Tensor::new(shape.to_vec(), dx)?));
            }
            Op::Reshape(x) => out.push((*x, dy.reshaped(self.shape(*x).to_vec())?)),
            Op::SliceCols { x, start } => {
                let (r, c) = self.value(*x).dims2("slice_cols")?;
                let len = dy.shape()[1];
                let mut dx = vec![T::zero(); r * c];
                for (row, grow) in dx.chunks_mut(c).zip(dy.data().chunks(len)) {
                    row[*start..*start + len].copy_from_slice(grow);
                }
                out.push((*x, Tensor::new([r, c], dx)?));
            }
            Op::ConcatCols(parts) => {
                let (r, total) = dy.dims2("concat_cols")?;
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    let mut dp = Vec::with_capacity(r * w);
                    for row in dy.data().chunks(total) {
                        dp.extend_from_slice(&row[offset..offset + w]);
                    }
                    offset += w;
                    out.push((p, Tensor::new([r, w], dp)?));
                }
            }
            Op::Sum(x) => {
                let g = dy.data()[0];
                out.push((*x, Tensor::full(self.shape(*x).to_vec(), g)));
            }
            Op::Mse { pred, target } => {
                let g = dy.data()[0];
                let n = T::from_usize(target.len()).expect("len fits");
                let two = T::cast_from(2.0);
                let dp = zip_map(self.value(*pred), target, |p, t| g * two * (p - t) / n);
                out.push((*pred, dp));
            }
            Op::SparseCrossEntropy {
                logits,
                label,
                probs,
            } => {
                let g = dy.data()[0];
                let dz: Vec<T> = probs
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        let onehot = if j == *label { T::one() } else { T::zero() };
                        g * (p - onehot)
                    })
                    .collect();
                out.push((*logits, Tensor::new(self.shape(*logits).to_vec(), dz)?));
            }
        }
        Ok(out)
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("matching shapes")
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Output shape of pooling `axes` away, plus the output flat index for
/// every input flat index.
fn pool_index(shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let kept: Vec<usize> = (0..shape.len()).filter(|a| !axes.contains(a)).collect();
    let out_shape: Vec<usize> = if kept.is_empty() {
        vec![1]
    } else {
        kept.iter().map(|&a| shape[a]).collect()
    };
    let total: usize = shape.iter().product();
    let mut map = Vec::with_capacity(total);
    let mut index = vec![0usize; shape.len()];
    for _ in 0..total {
        let o = kept.iter().fold(0, |acc, &a| acc * shape[a] + index[a]);
        map.push(o);
        for ax in (0..shape.len()).rev() {
            index[ax] += 1;
            if index[ax] < shape[ax] {
                break;
            }
            index[ax] = 0;
        }
    }
    (out_shape, map)
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044715;

fn gelu_fwd<T: Scalar>(x: T) -> T {
    let c = T::cast_from(SQRT_2_OVER_PI);
    let a = T::cast_from(GELU_CUBIC);
    let half = T::cast_from(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::cast_from(SQRT_2_OVER_PI);
    let a = T::cast_from(GELU_CUBIC);
    let half = T::cast_from(0.5);
    let three = T::cast_from(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

mod kernels {
    use super::Scalar;

    /// `a: [m, k] · b: [k, n]`.
    pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o = *o + av * bv;
                }
            }
        }
        out
    }

    /// `a: [m, k] · bᵀ` where `b: [n, k]`.
    pub fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &b[j * k..(j + 1) * k];
                out[i * n + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
            }
        }
        out
    }

    /// `aᵀ · b` where `a: [k, m]`, `b: [k, n]`.
    pub fn matmul_tn<T: Scalar>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
        let mut out = vec![T::zero(); m * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            for i in 0..m {
                let av = a[p * m + i];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o = *o + av * bv;
                }
            }
        }
        out
    }

    pub fn transpose<T: Scalar>(x: &[T], r: usize, c: usize) -> Vec<T> {
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        out
    }
}
