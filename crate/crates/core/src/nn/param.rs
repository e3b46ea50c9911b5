use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::tensor::{Graph, ParamId, Tensor, Var};

/// A named trainable tensor with a stable id.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    id: ParamId,
    name: String,
    pub value: Tensor,
    /// Whether the L2 penalty applies.
    pub decay: bool,
}

impl Param {
    pub fn new(ids: &mut ParamIds, name: impl Into<String>, value: Tensor, decay: bool) -> Self {
        Param { id: ids.next(), name: name.into(), value, decay }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn var(&self, g: &mut Graph) -> Var {
        g.param(self.id, &self.value)
    }
}

/// Sequential id allocator for the parameters of one model.
#[derive(Debug, Default)]
pub struct ParamIds(usize);

impl ParamIds {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocator whose first id is `first`, for parameters kept outside a model.
    pub fn starting_at(first: usize) -> Self {
        ParamIds(first)
    }

    pub fn next(&mut self) -> ParamId {
        self.0 += 1;
        ParamId(self.0 - 1)
    }
}

/// Parameter traversal in declaration order.
pub trait Module {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param));
    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param));

    fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        self.visit_mut(&mut |p| out.push(p));
        out
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.value.numel());
        n
    }
}

/// Glorot-uniform matrix `[fan_in, fan_out]`.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::from_parts(alloc::vec![fan_in, fan_out], data)
}
