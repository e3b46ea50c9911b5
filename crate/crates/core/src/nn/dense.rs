use alloc::format;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{glorot_uniform, Module, Param, ParamIds};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

/// `activation(x W + b)` over the trailing axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Param,
    pub bias: Param,
    activation: Activation,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(
        ids: &mut ParamIds,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weight = Param::new(ids, format!("{name}.weight"), glorot_uniform(fan_in, fan_out, rng), true);
        let bias = Param::new(ids, format!("{name}.bias"), Tensor::zeros(&[fan_out]), false);
        DenseLayer { weight, bias, activation }
    }

    /// Build from explicit tensors; `weight` is `[in, out]`, `bias` is `[out]`.
    pub fn from_tensors(ids: &mut ParamIds, name: &str, weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[1]] {
            return Err(Error::shape(
                "dense",
                format!("weight {:?} and bias {:?} are inconsistent", weight.shape(), bias.shape()),
            ));
        }
        Ok(DenseLayer {
            weight: Param::new(ids, format!("{name}.weight"), weight, true),
            bias: Param::new(ids, format!("{name}.bias"), bias, false),
            activation,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() < 2 || shape[shape.len() - 1] != self.in_features() {
            return Err(Error::shape(
                "dense",
                format!("input {:?} does not end in {} features", shape, self.in_features()),
            ));
        }
        let w = self.weight.var(g);
        let b = self.bias.var(g);
        let xw = g.matmul(x, w)?;
        let z = g.add(xw, b)?;
        match self.activation {
            Activation::None => Ok(z),
            Activation::Relu => g.relu(z),
            Activation::Sigmoid => g.sigmoid(z),
        }
    }
}

impl Module for DenseLayer {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use crate::tensor::grad_check_many;

    #[test]
    fn identity_weight_passes_input_through() {
        let mut ids = ParamIds::new();
        let eye = Tensor::new(&[3, 3], alloc::vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let layer = DenseLayer::from_tensors(&mut ids, "d", eye, Tensor::zeros(&[3]), Activation::None).unwrap();
        let x = Tensor::new(&[2, 3], alloc::vec![1., -2., 3., 0.5, 0., -1.]).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = layer.forward(&mut g, xv).unwrap();
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn sigmoid_output_in_open_unit_interval() {
        let mut rng = seeded_rng(3);
        let mut ids = ParamIds::new();
        let layer = DenseLayer::new(&mut ids, "d", 4, 5, Activation::Sigmoid, &mut rng);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_fn(&[3, 4], |i| (i as f64) - 6.0).unwrap());
        let y = layer.forward(&mut g, x).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn rejects_wrong_width() {
        let mut rng = seeded_rng(3);
        let mut ids = ParamIds::new();
        let layer = DenseLayer::new(&mut ids, "d", 4, 5, Activation::None, &mut rng);
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(layer.forward(&mut g, x), Err(Error::Shape { .. })));
    }

    #[test]
    fn relu_weight_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(11);
        let mut ids = ParamIds::new();
        let mut layer = DenseLayer::new(&mut ids, "d", 4, 3, Activation::Relu, &mut rng);
        layer.bias.value = Tensor::new(&[3], alloc::vec![0.3, -0.2, 0.1]).unwrap();
        let x = Tensor::from_fn(&[5, 4], |i| libm::sin(i as f64 * 1.3)).unwrap();
        let (w, b) = (layer.weight.value.clone(), layer.bias.value.clone());
        let err = grad_check_many(
            |g, v| {
                g.bind_param(layer.weight.id(), v[0]);
                g.bind_param(layer.bias.id(), v[1]);
                let xv = g.constant(x.clone());
                let y = layer.forward(g, xv)?;
                let sq = g.mul(y, y)?;
                g.sum_all(sq)
            },
            &[w, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
