use alloc::format;

use rand::Rng;

use super::{dropout, Activation, DenseLayer, LayerNorm, Module, MultiHeadAttention, Param, ParamIds};
use crate::error::Result;
use crate::tensor::{Graph, Tensor, Var};

/// Post-norm transformer encoder layer:
/// `y1 = norm(x + drop(attn(x)))`, `y2 = norm(y1 + drop(ff(y1)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    pub ff_in: DenseLayer,
    pub ff_out: DenseLayer,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
    pub dropout_rate: f64,
}

impl EncoderBlock {
    pub fn new<R: Rng + ?Sized>(
        ids: &mut ParamIds,
        name: &str,
        dmodel: usize,
        dff: usize,
        heads: usize,
        dropout_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(EncoderBlock {
            attention: MultiHeadAttention::new(ids, &format!("{name}.attention"), dmodel, heads, rng)?,
            ff_in: DenseLayer::new(ids, &format!("{name}.ff_in"), dmodel, dff, Activation::Relu, rng),
            ff_out: DenseLayer::new(ids, &format!("{name}.ff_out"), dff, dmodel, Activation::None, rng),
            norm1: LayerNorm::new(ids, &format!("{name}.norm1"), dmodel),
            norm2: LayerNorm::new(ids, &format!("{name}.norm2"), dmodel),
            dropout_rate,
        })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        x: Var,
        pad_mask: &Tensor,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let attn = self.attention.forward(g, x, pad_mask)?;
        let attn = dropout(g, attn, self.dropout_rate, training, rng)?;
        let res1 = g.add(x, attn)?;
        let y1 = self.norm1.forward(g, res1)?;

        let hidden = self.ff_in.forward(g, y1)?;
        let ff = self.ff_out.forward(g, hidden)?;
        let ff = dropout(g, ff, self.dropout_rate, training, rng)?;
        let res2 = g.add(y1, ff)?;
        self.norm2.forward(g, res2)
    }
}

impl Module for EncoderBlock {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.attention.visit(f);
        self.ff_in.visit(f);
        self.ff_out.visit(f);
        self.norm1.visit(f);
        self.norm2.visit(f);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param)) {
        self.attention.visit_mut(f);
        self.ff_in.visit_mut(f);
        self.ff_out.visit_mut(f);
        self.norm1.visit_mut(f);
        self.norm2.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn inference_ignores_rng() {
        let mut ids = ParamIds::new();
        let block = EncoderBlock::new(&mut ids, "b", 8, 16, 2, 0.5, &mut seeded_rng(0)).unwrap();
        let x = Tensor::from_fn(&[2, 3, 8], |i| libm::cos(i as f64 * 0.37)).unwrap();
        let mask = Tensor::new(&[2, 3], alloc::vec![0., 0., 1., 0., 0., 0.]).unwrap();
        let run = |seed| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y = block.forward(&mut g, xv, &mask, false, &mut seeded_rng(seed)).unwrap();
            g.value(y).clone()
        };
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn training_uses_dropout() {
        let mut ids = ParamIds::new();
        let block = EncoderBlock::new(&mut ids, "b", 8, 16, 2, 0.5, &mut seeded_rng(0)).unwrap();
        let x = Tensor::from_fn(&[1, 3, 8], |i| libm::cos(i as f64 * 0.37)).unwrap();
        let mask = Tensor::zeros(&[1, 3]);
        let run = |training| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y = block.forward(&mut g, xv, &mask, training, &mut seeded_rng(4)).unwrap();
            g.value(y).clone()
        };
        assert_ne!(run(true), run(false));
    }
}
