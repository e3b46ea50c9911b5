use alloc::format;

use super::{Module, Param, ParamIds};
use crate::error::Result;
use crate::tensor::{Graph, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Normalization over the trailing axis with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Param,
    pub bias: Param,
    eps: f64,
}

impl LayerNorm {
    pub fn new(ids: &mut ParamIds, name: &str, width: usize) -> Self {
        LayerNorm {
            gain: Param::new(ids, format!("{name}.gain"), Tensor::full(&[width], 1.0), false),
            bias: Param::new(ids, format!("{name}.bias"), Tensor::zeros(&[width]), false),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mu = g.mean(x, -1, true)?;
        let centered = g.sub(x, mu)?;
        let sq = g.mul(centered, centered)?;
        let var = g.mean(sq, -1, true)?;
        let shifted = g.offset(var, self.eps)?;
        let std = g.sqrt(shifted)?;
        let normed = g.div(centered, std)?;
        let gain = self.gain.var(g);
        let bias = self.bias.var(g);
        let scaled = g.mul(normed, gain)?;
        g.add(scaled, bias)
    }
}

impl Module for LayerNorm {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.gain);
        f(&self.bias);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param)) {
        f(&mut self.gain);
        f(&mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use crate::tensor::grad_check_many;
    use rand::Rng;

    #[test]
    fn unit_gain_output_is_standardized() {
        let mut ids = ParamIds::new();
        let ln = LayerNorm::new(&mut ids, "ln", 16);
        let mut rng = seeded_rng(5);
        let x = Tensor::from_fn(&[3, 16], |_| rng.random_range(-20.0..20.0)).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = ln.forward(&mut g, xv).unwrap();
        let y = g.value(y);
        for row in y.data().chunks(16) {
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-6, "{mean}");
            assert!((var - 1.0).abs() < 1e-6, "{var}");
        }
    }

    #[test]
    fn gradient_check() {
        let mut ids = ParamIds::new();
        let mut ln = LayerNorm::new(&mut ids, "ln", 5);
        let mut rng = seeded_rng(9);
        ln.gain.value = Tensor::from_fn(&[5], |_| rng.random_range(0.5..1.5)).unwrap();
        ln.bias.value = Tensor::from_fn(&[5], |_| rng.random_range(-1.0..1.0)).unwrap();
        let x = Tensor::from_fn(&[4, 5], |_| rng.random_range(-2.0..2.0)).unwrap();
        let coef = Tensor::from_fn(&[4, 5], |_| rng.random_range(-1.0..1.0)).unwrap();
        let err = grad_check_many(
            |g, v| {
                g.bind_param(ln.gain.id(), v[1]);
                g.bind_param(ln.bias.id(), v[2]);
                let y = ln.forward(g, v[0])?;
                let c = g.constant(coef.clone());
                let p = g.mul(y, c)?;
                g.sum_all(p)
            },
            &[x, ln.gain.value.clone(), ln.bias.value.clone()],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
