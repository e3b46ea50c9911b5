use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::broadcast::{aligned_strides, for_each_pair};
use super::ops::{matmul_plan, BinaryOp, ReduceOp, UnaryOp};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub(crate) usize);

/// Stable identity of a trainable parameter across graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

pub(crate) enum Op {
    Leaf,
    Binary { kind: BinaryOp, a: Var, b: Var },
    Unary { kind: UnaryOp, x: Var },
    MatMul { a: Var, b: Var },
    Softmax { x: Var, axis: usize },
    Reduce { kind: ReduceOp, x: Var, outer: usize, len: usize, inner: usize, argmax: Vec<usize> },
    SumAll { x: Var },
    Reshape { x: Var },
    Permute { x: Var, src: Vec<usize> },
}

pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
}

/// Dynamic tape recording one forward pass.
///
/// Nodes are appended in evaluation order, so node index order is a
/// topological order and `backward` walks it in reverse.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    params: BTreeMap<ParamId, Var>,
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

    /// Insert a tensor as a leaf; it receives gradients iff `requires_grad` is set on it.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad();
        self.nodes.push(Node { op: Op::Leaf, value: tensor, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Insert a tensor that never receives gradients.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    /// Leaf for a trainable parameter. Repeated calls with the same id in one
    /// graph return the same node.
    pub fn param(&mut self, id: ParamId, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.leaf(value.clone().with_requires_grad(true));
        self.params.insert(id, v);
        v
    }

    /// Route parameter `id` to an existing node (used by gradient checks).
    pub fn bind_param(&mut self, id: ParamId, var: Var) {
        self.params.insert(id, var);
    }

    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }

    /// Accumulated gradient of the parameter, if it took part in a backward pass.
    pub fn param_grad(&self, id: ParamId) -> Option<&[f64]> {
        self.param_var(id).and_then(|v| self.grad(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    pub(crate) fn push(&mut self, name: &'static str, op: Op, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: name });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Binary { a, b, .. } | Op::MatMul { a, b } => self.rg(*a) || self.rg(*b),
            Op::Unary { x, .. }
            | Op::Softmax { x, .. }
            | Op::Reduce { x, .. }
            | Op::SumAll { x }
            | Op::Reshape { x }
            | Op::Permute { x, .. } => self.rg(*x),
        };
        self.nodes.push(Node { op, value: Tensor::from_parts(shape, data), requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Reverse-mode sweep from a single-element `loss`. Gradients are added to
    /// the buffers of leaves that require them, so repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_shape = self.shape(loss);
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got shape {loss_shape:?}")));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Binary { kind, a, b } => {
                    self.binary_backward(&mut grads, *kind, *a, *b, node.value.shape(), &g)
                }
                Op::Unary { kind, x } => {
                    if self.rg(*x) {
                        let xv = self.nodes[x.0].value.data();
                        let yv = node.value.data();
                        let gx = slot(&mut grads, *x, xv.len());
                        for j in 0..gx.len() {
                            gx[j] += g[j] * kind.derivative(xv[j], yv[j]);
                        }
                    }
                }
                Op::MatMul { a, b } => self.matmul_backward(&mut grads, *a, *b, &g)?,
                Op::Softmax { x, axis } => {
                    if self.rg(*x) {
                        let y = node.value.data();
                        let shape = node.value.shape();
                        let len = shape[*axis];
                        let inner: usize = shape[axis + 1..].iter().product();
                        let outer = y.len() / (len * inner).max(1);
                        let gx = slot(&mut grads, *x, y.len());
                        for o in 0..outer {
                            for r in 0..inner {
                                let base = o * len * inner + r;
                                let dot: f64 = (0..len).map(|l| g[base + l * inner] * y[base + l * inner]).sum();
                                for l in 0..len {
                                    let k = base + l * inner;
                                    gx[k] += y[k] * (g[k] - dot);
                                }
                            }
                        }
                    }
                }
                Op::Reduce { kind, x, outer, len, inner, argmax } => {
                    if self.rg(*x) {
                        let (outer, len, inner) = (*outer, *len, *inner);
                        let gx = slot(&mut grads, *x, outer * len * inner);
                        for o in 0..outer {
                            for r in 0..inner {
                                let go = g[o * inner + r];
                                match kind {
                                    ReduceOp::Sum | ReduceOp::Mean => {
                                        let s = if *kind == ReduceOp::Mean { go / len as f64 } else { go };
                                        for l in 0..len {
                                            gx[(o * len + l) * inner + r] += s;
                                        }
                                    }
                                    ReduceOp::Max => gx[argmax[o * inner + r]] += go,
                                }
                            }
                        }
                    }
                }
                Op::SumAll { x } => {
                    if self.rg(*x) {
                        let n = self.nodes[x.0].value.numel();
                        slot(&mut grads, *x, n).iter_mut().for_each(|v| *v += g[0]);
                    }
                }
                Op::Reshape { x } => {
                    if self.rg(*x) {
                        let gx = slot(&mut grads, *x, g.len());
                        gx.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    }
                }
                Op::Permute { x, src } => {
                    if self.rg(*x) {
                        let gx = slot(&mut grads, *x, g.len());
                        for (o, &s) in src.iter().enumerate() {
                            gx[s] += g[o];
                        }
                    }
                }
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].value.accumulate_grad(&g);
            }
        }
        Ok(())
    }

    fn binary_backward(
        &self,
        grads: &mut [Option<Vec<f64>>],
        kind: BinaryOp,
        a: Var,
        b: Var,
        out_shape: &[usize],
        g: &[f64],
    ) {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let sa = aligned_strides(av.shape(), out_shape);
        let sb = aligned_strides(bv.shape(), out_shape);
        let (ad, bd) = (av.data(), bv.data());
        if self.rg(a) {
            let mut ga = vec![0.0; ad.len()];
            for_each_pair(out_shape, &sa, &sb, |o, ia, ib| {
                ga[ia] += g[o] * kind.d_left(ad[ia], bd[ib]);
            });
            add_into(slot(grads, a, ad.len()), &ga);
        }
        if self.rg(b) {
            let mut gb = vec![0.0; bd.len()];
            for_each_pair(out_shape, &sa, &sb, |o, ia, ib| {
                gb[ib] += g[o] * kind.d_right(ad[ia], bd[ib]);
            });
            add_into(slot(grads, b, bd.len()), &gb);
        }
    }

    fn matmul_backward(&self, grads: &mut [Option<Vec<f64>>], a: Var, b: Var, g: &[f64]) -> Result<()> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let plan = matmul_plan(av.shape(), bv.shape())?;
        let (m, k, n) = (plan.m, plan.k, plan.n);
        let (ad, bd) = (av.data(), bv.data());
        if self.rg(a) {
            let mut ga = vec![0.0; ad.len()];
            for (bi, &(ia, ib)) in plan.pairs.iter().enumerate() {
                let gc = &g[bi * m * n..(bi + 1) * m * n];
                let bm = &bd[ib * k * n..(ib + 1) * k * n];
                let gam = &mut ga[ia * m * k..(ia + 1) * m * k];
                for i in 0..m {
                    let grow = &gc[i * n..(i + 1) * n];
                    for kk in 0..k {
                        let brow = &bm[kk * n..(kk + 1) * n];
                        gam[i * k + kk] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
            }
            add_into(slot(grads, a, ad.len()), &ga);
        }
        if self.rg(b) {
            let mut gb = vec![0.0; bd.len()];
            for (bi, &(ia, ib)) in plan.pairs.iter().enumerate() {
                let gc = &g[bi * m * n..(bi + 1) * m * n];
                let am = &ad[ia * m * k..(ia + 1) * m * k];
                let gbm = &mut gb[ib * k * n..(ib + 1) * k * n];
                for i in 0..m {
                    let grow = &gc[i * n..(i + 1) * n];
                    for kk in 0..k {
                        let aik = am[i * k + kk];
                        if aik == 0.0 {
                            continue;
                        }
                        gbm[kk * n..(kk + 1) * n].iter_mut().zip(grow).for_each(|(d, gv)| *d += aik * gv);
                    }
                }
            }
            add_into(slot(grads, b, bd.len()), &gb);
        }
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
