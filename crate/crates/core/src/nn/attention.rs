use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::{glorot_uniform, Module, Param, ParamIds, MASK_NEG};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Multi-head scaled dot-product self-attention with a key padding mask.
///
/// Head `i` uses columns `i*d_k .. (i+1)*d_k` of the query, key and value
/// projections; the concatenated heads go through `w_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub w_q: Param,
    pub w_k: Param,
    pub w_v: Param,
    pub w_o: Param,
    heads: usize,
    dmodel: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(ids: &mut ParamIds, name: &str, dmodel: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || !dmodel.is_multiple_of(heads) {
            return Err(Error::Config(format!("dmodel {dmodel} is not divisible by {heads} heads")));
        }
        let mut proj = |suffix: &str, rng: &mut R| {
            Param::new(ids, format!("{name}.{suffix}"), glorot_uniform(dmodel, dmodel, rng), false)
        };
        Ok(MultiHeadAttention {
            w_q: proj("w_q", rng),
            w_k: proj("w_k", rng),
            w_v: proj("w_v", rng),
            w_o: proj("w_o", rng),
            heads,
            dmodel,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn d_k(&self) -> usize {
        self.dmodel / self.heads
    }

    pub fn forward(&self, g: &mut Graph, x: Var, pad_mask: &Tensor) -> Result<Var> {
        self.forward_with_weights(g, x, pad_mask).map(|(out, _)| out)
    }

    /// Returns the output `[B, T, dmodel]` and the attention weights `[B, h, T, T]`.
    pub fn forward_with_weights(&self, g: &mut Graph, x: Var, pad_mask: &Tensor) -> Result<(Var, Var)> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.dmodel {
            return Err(Error::shape("attention", format!("input {:?} is not [B, T, {}]", shape, self.dmodel)));
        }
        let (b, t, h, dk) = (shape[0], shape[1], self.heads, self.d_k());
        let bias = mask_bias(pad_mask, b, t)?;

        let split = |g: &mut Graph, w: &Param, perm: &[usize]| -> Result<Var> {
            let wv = w.var(g);
            let p = g.matmul(x, wv)?;
            let p = g.reshape(p, &[b, t, h, dk])?;
            g.permute(p, perm)
        };
        let q = split(g, &self.w_q, &[0, 2, 1, 3])?;
        let k_t = split(g, &self.w_k, &[0, 2, 3, 1])?;
        let v = split(g, &self.w_v, &[0, 2, 1, 3])?;

        let scores = g.matmul(q, k_t)?;
        let scores = g.scale(scores, 1.0 / libm::sqrt(dk as f64))?;
        let bias = g.constant(bias);
        let scores = g.add(scores, bias)?;
        let weights = g.softmax(scores, -1)?;

        let ctx = g.matmul(weights, v)?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[b, t, self.dmodel])?;
        let wo = self.w_o.var(g);
        let out = g.matmul(ctx, wo)?;
        Ok((out, weights))
    }
}

/// `[B, 1, 1, T]` additive logits from a `[B, T]` 0/1 padding mask.
fn mask_bias(pad_mask: &Tensor, b: usize, t: usize) -> Result<Tensor> {
    if pad_mask.shape() != [b, t] {
        return Err(Error::shape(
            "attention",
            format!("padding mask {:?} does not match [{b}, {t}]", pad_mask.shape()),
        ));
    }
    let data: Vec<f64> = pad_mask
        .data()
        .iter()
        .map(|&m| match m {
            0.0 => Ok(0.0),
            1.0 => Ok(MASK_NEG),
            other => Err(Error::Data(format!("padding mask entries must be 0 or 1, found {other}"))),
        })
        .collect::<Result<_>>()?;
    Tensor::new(&[b, 1, 1, t], data)
}

impl Module for MultiHeadAttention {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.w_q);
        f(&self.w_k);
        f(&self.w_v);
        f(&self.w_o);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param)) {
        f(&mut self.w_q);
        f(&mut self.w_k);
        f(&mut self.w_v);
        f(&mut self.w_o);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn rejects_indivisible_width() {
        let mut ids = ParamIds::new();
        assert!(MultiHeadAttention::new(&mut ids, "a", 6, 4, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn identical_keys_give_uniform_weights() {
        let mut ids = ParamIds::new();
        let mha = MultiHeadAttention::new(&mut ids, "a", 4, 2, &mut seeded_rng(1)).unwrap();
        let row = [0.3, -0.7, 1.1, 0.2];
        let x = Tensor::from_fn(&[1, 3, 4], |i| row[i % 4]).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x);
        let (_, w) = mha.forward_with_weights(&mut g, xv, &Tensor::zeros(&[1, 3])).unwrap();
        for v in g.value(w).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn padded_key_gets_no_weight() {
        let mut ids = ParamIds::new();
        let mha = MultiHeadAttention::new(&mut ids, "a", 4, 2, &mut seeded_rng(2)).unwrap();
        let x = Tensor::from_fn(&[2, 3, 4], |i| libm::sin(i as f64)).unwrap();
        let mask = Tensor::new(&[2, 3], alloc::vec![0., 0., 1., 0., 0., 1.]).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x);
        let (_, w) = mha.forward_with_weights(&mut g, xv, &mask).unwrap();
        let w = g.value(w);
        for b in 0..2 {
            for h in 0..2 {
                for q in 0..3 {
                    assert!(w.at(&[b, h, q, 2]) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn mask_validation() {
        let mut ids = ParamIds::new();
        let mha = MultiHeadAttention::new(&mut ids, "a", 4, 1, &mut seeded_rng(2)).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(Tensor::zeros(&[1, 2, 4]));
        assert!(mha.forward(&mut g, xv, &Tensor::zeros(&[1, 3])).is_err());
        assert!(mha.forward(&mut g, xv, &Tensor::full(&[1, 2], 0.5)).is_err());
    }
}
