use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::broadcast::{aligned_strides, broadcast_shapes, for_each_pair};
use super::graph::{Graph, Op, Var};
use super::{numel, resolve_axis, strides, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
        }
    }

    pub(crate) fn d_left(self, _a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1.0,
            BinaryOp::Mul => b,
            BinaryOp::Div => 1.0 / b,
        }
    }

    pub(crate) fn d_right(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => 1.0,
            BinaryOp::Sub => -1.0,
            BinaryOp::Mul => a,
            BinaryOp::Div => -a / (b * b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum UnaryOp {
    Exp,
    Log,
    Sin,
    Cos,
    Neg,
    Scale(f64),
    Offset(f64),
    Sqrt,
    Relu,
    Sigmoid,
    Clamp(f64, f64),
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Neg => "neg",
            UnaryOp::Scale(_) => "scale",
            UnaryOp::Offset(_) => "offset",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Relu => "relu",
            UnaryOp::Sigmoid => "sigmoid",
            UnaryOp::Clamp(..) => "clamp",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Exp => libm::exp(x),
            UnaryOp::Log => libm::log(x),
            UnaryOp::Sin => libm::sin(x),
            UnaryOp::Cos => libm::cos(x),
            UnaryOp::Neg => -x,
            UnaryOp::Scale(c) => c * x,
            UnaryOp::Offset(c) => x + c,
            UnaryOp::Sqrt => libm::sqrt(x),
            UnaryOp::Relu => x.max(0.0),
            UnaryOp::Sigmoid => sigmoid(x),
            UnaryOp::Clamp(lo, hi) => x.clamp(lo, hi),
        }
    }

    /// dy/dx given input `x` and output `y`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryOp::Exp => y,
            UnaryOp::Log => 1.0 / x,
            UnaryOp::Sin => libm::cos(x),
            UnaryOp::Cos => -libm::sin(x),
            UnaryOp::Neg => -1.0,
            UnaryOp::Scale(c) => c,
            UnaryOp::Offset(_) => 1.0,
            UnaryOp::Sqrt => 0.5 / y,
            UnaryOp::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryOp::Sigmoid => y * (1.0 - y),
            UnaryOp::Clamp(lo, hi) => {
                if (lo..=hi).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

pub(crate) struct MatMulPlan {
    pub out_shape: Vec<usize>,
    /// (matrix index in a, matrix index in b) for each output matrix.
    pub pairs: Vec<(usize, usize)>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

pub(crate) fn matmul_plan(a: &[usize], b: &[usize]) -> Result<MatMulPlan> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::shape("matmul", format!("operands must have rank >= 2, got {a:?} and {b:?}")));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(Error::shape("matmul", format!("inner dimensions differ: {a:?} x {b:?}")));
    }
    let (ba, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
    let batch = broadcast_shapes(ba, bb).map_err(|_| {
        Error::shape("matmul", format!("batch dimensions not broadcastable: {a:?} x {b:?}"))
    })?;
    let sa = aligned_strides(ba, &batch);
    let sb = aligned_strides(bb, &batch);
    let mut pairs = Vec::with_capacity(numel(&batch));
    if batch.is_empty() {
        pairs.push((0, 0));
    } else {
        for_each_pair(&batch, &sa, &sb, |_, ia, ib| pairs.push((ia, ib)));
    }
    let mut out_shape = batch;
    out_shape.extend_from_slice(&[m, n]);
    Ok(MatMulPlan { out_shape, pairs, m, k, n })
}

impl Graph {
    fn binary(&mut self, kind: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let out = broadcast_shapes(av.shape(), bv.shape()).map_err(|_| {
            Error::shape(kind.name(), format!("shapes {:?} and {:?} are not broadcastable", av.shape(), bv.shape()))
        })?;
        let (ad, bd) = (av.data(), bv.data());
        if kind == BinaryOp::Div {
            if let Some(p) = bd.iter().position(|&v| v == 0.0) {
                return Err(Error::domain("div", format!("division by zero at denominator index {p}")));
            }
        }
        let mut data = vec![0.0; numel(&out)];
        if av.shape() == bv.shape() {
            for (o, d) in data.iter_mut().enumerate() {
                *d = kind.apply(ad[o], bd[o]);
            }
        } else {
            let sa = aligned_strides(av.shape(), &out);
            let sb = aligned_strides(bv.shape(), &out);
            for_each_pair(&out, &sa, &sb, |o, ia, ib| data[o] = kind.apply(ad[ia], bd[ib]));
        }
        self.push(kind.name(), Op::Binary { kind, a, b }, out, data)
    }

    fn unary(&mut self, kind: UnaryOp, x: Var) -> Result<Var> {
        let xv = self.value(x);
        match kind {
            UnaryOp::Log => {
                if let Some(p) = xv.data().iter().position(|&v| v <= 0.0) {
                    return Err(Error::domain("log", format!("non-positive input {} at index {p}", xv.data()[p])));
                }
            }
            UnaryOp::Sqrt => {
                if let Some(p) = xv.data().iter().position(|&v| v <= 0.0) {
                    return Err(Error::domain("sqrt", format!("non-positive input {} at index {p}", xv.data()[p])));
                }
            }
            _ => {}
        }
        let data = xv.data().iter().map(|&v| kind.apply(v)).collect();
        let shape = xv.shape().to_vec();
        self.push(kind.name(), Op::Unary { kind, x }, shape, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    /// Errors with a domain error if any denominator is exactly zero.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Exp, x)
    }

    /// Errors with a domain error on non-positive input.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Log, x)
    }

    pub fn sin(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Sin, x)
    }

    pub fn cos(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Cos, x)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Neg, x)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(UnaryOp::Scale(c), x)
    }

    /// `x + c` for a scalar constant.
    pub fn offset(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(UnaryOp::Offset(c), x)
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Sqrt, x)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Relu, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(UnaryOp::Sigmoid, x)
    }

    /// Clamp into `[lo, hi]`; gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(UnaryOp::Clamp(lo, hi), x)
    }

    /// Batched matrix product `[.., M, K] x [.., K, N]` with broadcast batch axes.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let plan = matmul_plan(av.shape(), bv.shape())?;
        let (m, k, n) = (plan.m, plan.k, plan.n);
        let (ad, bd) = (av.data(), bv.data());
        let mut data = vec![0.0; numel(&plan.out_shape)];
        for (bi, &(ia, ib)) in plan.pairs.iter().enumerate() {
            let am = &ad[ia * m * k..(ia + 1) * m * k];
            let bm = &bd[ib * k * n..(ib + 1) * k * n];
            let cm = &mut data[bi * m * n..(bi + 1) * m * n];
            for i in 0..m {
                let crow = &mut cm[i * n..(i + 1) * n];
                for kk in 0..k {
                    let aik = am[i * k + kk];
                    if aik == 0.0 {
                        continue;
                    }
                    crow.iter_mut().zip(&bm[kk * n..(kk + 1) * n]).for_each(|(c, b)| *c += aik * b);
                }
            }
        }
        self.push("matmul", Op::MatMul { a, b }, plan.out_shape, data)
    }

    /// Softmax along `axis`, with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: isize) -> Result<Var> {
        let xv = self.value(x);
        let axis = resolve_axis("softmax", axis, xv.rank())?;
        let shape = xv.shape().to_vec();
        let len = shape[axis];
        if len == 0 {
            return Err(Error::shape("softmax", "empty axis"));
        }
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let xd = xv.data();
        let mut data = vec![0.0; xd.len()];
        for o in 0..outer {
            for r in 0..inner {
                let base = o * len * inner + r;
                let max = (0..len).map(|l| xd[base + l * inner]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for l in 0..len {
                    let e = libm::exp(xd[base + l * inner] - max);
                    data[base + l * inner] = e;
                    sum += e;
                }
                for l in 0..len {
                    data[base + l * inner] /= sum;
                }
            }
        }
        self.push("softmax", Op::Softmax { x, axis }, shape, data)
    }

    /// Reduce along `axis`; `keepdim` leaves a unit axis in place.
    pub fn reduce(&mut self, kind: ReduceOp, x: Var, axis: isize, keepdim: bool) -> Result<Var> {
        let xv = self.value(x);
        let axis = resolve_axis("reduce", axis, xv.rank())?;
        let shape = xv.shape();
        let len = shape[axis];
        if len == 0 {
            return Err(Error::shape("reduce", format!("cannot reduce empty axis {axis} of {shape:?}")));
        }
        let inner: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let xd = xv.data();
        let mut data = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        if kind == ReduceOp::Max {
            argmax = vec![0; outer * inner];
        }
        for o in 0..outer {
            for r in 0..inner {
                let idx = |l: usize| (o * len + l) * inner + r;
                let out = o * inner + r;
                match kind {
                    ReduceOp::Sum | ReduceOp::Mean => {
                        let s: f64 = (0..len).map(|l| xd[idx(l)]).sum();
                        data[out] = if kind == ReduceOp::Mean { s / len as f64 } else { s };
                    }
                    ReduceOp::Max => {
                        let mut best = idx(0);
                        for l in 1..len {
                            if xd[idx(l)] > xd[best] {
                                best = idx(l);
                            }
                        }
                        argmax[out] = best;
                        data[out] = xd[best];
                    }
                }
            }
        }
        let mut out_shape = shape.to_vec();
        if keepdim {
            out_shape[axis] = 1;
        } else {
            out_shape.remove(axis);
        }
        let name = match kind {
            ReduceOp::Sum => "sum",
            ReduceOp::Mean => "mean",
            ReduceOp::Max => "max",
        };
        self.push(name, Op::Reduce { kind, x, outer, len, inner, argmax }, out_shape, data)
    }

    pub fn sum(&mut self, x: Var, axis: isize, keepdim: bool) -> Result<Var> {
        self.reduce(ReduceOp::Sum, x, axis, keepdim)
    }

    pub fn mean(&mut self, x: Var, axis: isize, keepdim: bool) -> Result<Var> {
        self.reduce(ReduceOp::Mean, x, axis, keepdim)
    }

    pub fn max(&mut self, x: Var, axis: isize, keepdim: bool) -> Result<Var> {
        self.reduce(ReduceOp::Max, x, axis, keepdim)
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push("sum_all", Op::SumAll { x }, Vec::new(), vec![s])
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        if n == 0 {
            return Err(Error::shape("mean_all", "empty tensor"));
        }
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if numel(shape) != xv.numel() {
            return Err(Error::shape("reshape", format!("cannot view {:?} as {:?}", xv.shape(), shape)));
        }
        let data = xv.data().to_vec();
        self.push("reshape", Op::Reshape { x }, shape.to_vec(), data)
    }

    /// Reorder axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let rank = xv.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || core::mem::replace(&mut seen[p], true)) {
            return Err(Error::shape("permute", format!("{perm:?} is not a permutation of rank {rank}")));
        }
        let in_strides = strides(xv.shape());
        let out_shape: Vec<usize> = perm.iter().map(|&p| xv.shape()[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let zero = vec![0; rank];
        let mut src = vec![0; xv.numel()];
        for_each_pair(&out_shape, &src_strides, &zero, |o, s, _| src[o] = s);
        let xd = xv.data();
        let data = src.iter().map(|&s| xd[s]).collect();
        self.push("permute", Op::Permute { x, src }, out_shape, data)
    }

    /// Swap the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let rank = self.value(x).rank();
        if rank < 2 {
            return Err(Error::shape("transpose", "rank must be at least 2"));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 2, rank - 1);
        self.permute(x, &perm)
    }

    /// Constant from raw parts, for masks and fixed tables.
    pub fn constant_from(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        Ok(self.constant(Tensor::new(shape, data)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut g = Graph::new();
        let i = g.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let m = g.constant(t(&[2, 2], &[3., 5., 7., 11.]));
        let p = g.matmul(i, m).unwrap();
        assert_eq!(g.value(p).data(), &[3., 5., 7., 11.]);

        let a = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = g.constant(t(&[2, 1], &[5., 6.]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1]);
        assert_eq!(g.value(c).data(), &[17., 39.]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[4, 5]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    }

    #[test]
    fn matmul_broadcasts_batch() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_fn(&[2, 3, 2], |i| i as f64).unwrap());
        let w = g.constant(t(&[2, 1], &[1., 1.]));
        let c = g.matmul(a, w).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 3, 1]);
        assert_eq!(g.value(c).data(), &[1., 5., 9., 13., 17., 21.]);
    }

    #[test]
    fn domain_errors() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(g.log(x), Err(Error::Domain { op: "log", .. })));
        let one = g.constant(Tensor::scalar(1.0));
        assert!(matches!(g.div(one, x), Err(Error::Domain { op: "div", .. })));
    }

    #[test]
    fn non_finite_output_is_an_error() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1], &[1000.0]));
        assert_eq!(g.exp(x).unwrap_err(), Error::NonFinite { op: "exp" });
    }

    #[test]
    fn elementwise_identities() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::scalar(0.0));
        let s = g.sin(z).unwrap();
        assert_eq!(g.value(s).item().unwrap(), 0.0);
        let x = g.constant(t(&[3], &[0.5, 2.0, 7.25]));
        let l = g.log(x).unwrap();
        let e = g.exp(l).unwrap();
        for (a, b) in g.value(e).data().iter().zip([0.5, 2.0, 7.25]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_cases() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[0., 0., 0.]));
        let s = g.softmax(x, 0).unwrap();
        for v in g.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = g.constant(t(&[2], &[1000., 0.]));
        let s = g.softmax(x, -1).unwrap();
        assert_eq!(g.value(s).data()[0], 1.0);
        assert!(g.value(s).data()[1] < 1e-300);
        let x = g.constant(t(&[3], &[1., 2., 3.]));
        let s = g.softmax(x, 0).unwrap();
        let want = [0.09003057317038046, 0.24472847105479767, 0.6652409557748219];
        for (a, b) in g.value(s).data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_inner_axis() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn(&[2, 3, 2], |i| (i as f64 * 0.7).sin()).unwrap());
        let s = g.softmax(x, 1).unwrap();
        let v = g.value(s);
        for a in 0..2 {
            for c in 0..2 {
                let sum: f64 = (0..3).map(|b| v.at(&[a, b, c])).sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reductions() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[2., 4., 6.]));
        let m = g.mean(x, 0, false).unwrap();
        assert_eq!(g.value(m).item().unwrap(), 4.0);
        let x = g.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let s = g.sum(x, 0, false).unwrap();
        assert_eq!(g.value(s).data(), &[4., 6.]);
        let mx = g.max(x, 1, true).unwrap();
        assert_eq!(g.value(mx).shape(), &[2, 1]);
        assert_eq!(g.value(mx).data(), &[2., 4.]);
        let e = g.constant(Tensor::zeros(&[0, 2]));
        assert!(g.sum(e, 0, false).is_err());
    }

    #[test]
    fn permute_moves_axes() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn(&[2, 3, 4], |i| i as f64).unwrap());
        let p = g.permute(x, &[2, 0, 1]).unwrap();
        let v = g.value(p).clone();
        assert_eq!(v.shape(), &[4, 2, 3]);
        let src = g.value(x).clone();
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(v.at(&[c, a, b]), src.at(&[a, b, c]));
                }
            }
        }
        assert!(g.permute(x, &[0, 0, 1]).is_err());
    }
}
