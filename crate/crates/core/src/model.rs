//! The soft sensing transformer: dense embedding, sinusoidal positions,
//! encoder stack, masked average pooling and a three-layer sigmoid MLP with
//! one negative and one positive head per task.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dropout, global_average_pool, Activation, DenseLayer, EncoderBlock, Module, Param, ParamIds, PositionalEncoding};
use crate::tensor::{Graph, Tensor, Var};
use crate::{derive_seed, seeded_rng};

/// Hyperparameters and fixed extents of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SstConfig {
    pub n_layers: usize,
    pub dmodel: usize,
    pub dff: usize,
    pub n_heads: usize,
    pub dropout_rate: f64,
    /// Input width, padding-indicator column included.
    pub n_features: usize,
    pub max_timesteps: usize,
    pub n_tasks: usize,
    pub lr_factor: f64,
    pub batch_size: usize,
    pub warmup: u64,
    pub uncertainty_weighting: bool,
    pub l2_factor: f64,
    pub seed: u64,
}

impl Default for SstConfig {
    fn default() -> Self {
        SstConfig {
            n_layers: 3,
            dmodel: 128,
            dff: 128,
            n_heads: 1,
            dropout_rate: 0.5,
            n_features: 1,
            max_timesteps: 1,
            n_tasks: 1,
            lr_factor: 0.5,
            batch_size: 2048,
            warmup: 4000,
            uncertainty_weighting: false,
            l2_factor: 1e-4,
            seed: 0,
        }
    }
}

impl SstConfig {
    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("n_layers", self.n_layers),
            ("dmodel", self.dmodel),
            ("dff", self.dff),
            ("n_heads", self.n_heads),
            ("n_features", self.n_features),
            ("max_timesteps", self.max_timesteps),
            ("n_tasks", self.n_tasks),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.dmodel.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "dmodel {} is not divisible by n_heads {}",
                self.dmodel, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.lr_factor.is_finite() && self.lr_factor >= 0.0) {
            return Err(Error::Config(format!("lr_factor {} must be finite and non-negative", self.lr_factor)));
        }
        if self.warmup == 0 {
            return Err(Error::Config("warmup must be positive".into()));
        }
        if !(self.l2_factor.is_finite() && self.l2_factor >= 0.0) {
            return Err(Error::Config(format!("l2_factor {} must be finite and non-negative", self.l2_factor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SstModel {
    config: SstConfig,
    pub embedding: DenseLayer,
    pub positional: PositionalEncoding,
    pub blocks: Vec<EncoderBlock>,
    pub mlp: [DenseLayer; 3],
}

impl SstModel {
    /// Glorot-initialized model; initialization is a pure function of `config.seed`.
    pub fn new(config: &SstConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(derive_seed(config.seed, 0x1417));
        let mut ids = ParamIds::new();
        let c = config;
        let embedding = DenseLayer::new(&mut ids, "embedding", c.n_features, c.dmodel, Activation::None, &mut rng);
        let blocks = (0..c.n_layers)
            .map(|i| EncoderBlock::new(&mut ids, &format!("encoder.{i}"), c.dmodel, c.dff, c.n_heads, c.dropout_rate, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let mlp = [
            DenseLayer::new(&mut ids, "mlp.0", c.dmodel, c.dff, Activation::Sigmoid, &mut rng),
            DenseLayer::new(&mut ids, "mlp.1", c.dff, c.dff, Activation::Sigmoid, &mut rng),
            DenseLayer::new(&mut ids, "mlp.2", c.dff, 2 * c.n_tasks, Activation::Sigmoid, &mut rng),
        ];
        Ok(SstModel {
            config: config.clone(),
            embedding,
            positional: PositionalEncoding::new(c.max_timesteps, c.dmodel),
            blocks,
            mlp,
        })
    }

    pub fn config(&self) -> &SstConfig {
        &self.config
    }

    /// Raw sigmoid head outputs `[B, 2m]`; columns `2j` and `2j+1` are the
    /// negative and positive heads of task `j`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        x: &Tensor,
        pad_mask: &Tensor,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let shape = x.shape();
        if shape.len() != 3 || shape[2] != self.config.n_features {
            return Err(Error::shape(
                "sst_forward",
                format!("input {:?} is not [B, T, {}]", shape, self.config.n_features),
            ));
        }
        if shape[1] > self.config.max_timesteps {
            return Err(Error::shape(
                "sst_forward",
                format!("{} timesteps exceed max_timesteps {}", shape[1], self.config.max_timesteps),
            ));
        }
        let rate = self.config.dropout_rate;
        let xv = g.constant(x.clone());
        let embedded = self.embedding.forward(g, xv)?;
        let pe = g.constant(self.positional.lookup(shape[1])?);
        let mut h = g.add(embedded, pe)?;
        h = dropout(g, h, rate, training, rng)?;
        for block in &self.blocks {
            h = block.forward(g, h, pad_mask, training, rng)?;
        }
        h = global_average_pool(g, h, pad_mask)?;
        h = self.mlp[0].forward(g, h)?;
        h = dropout(g, h, rate, training, rng)?;
        h = self.mlp[1].forward(g, h)?;
        h = dropout(g, h, rate, training, rng)?;
        self.mlp[2].forward(g, h)
    }

    /// Inference-mode raw head outputs `[B, 2m]`.
    pub fn forward_inference(&self, x: &Tensor, pad_mask: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        // dropout is inactive, so the rng is never drawn from
        let out = self.forward(&mut g, x, pad_mask, false, &mut seeded_rng(0))?;
        Ok(g.value(out).clone())
    }

    /// Positive-class probability per task, `[B, m]`.
    pub fn predict_proba(&self, x: &Tensor, pad_mask: &Tensor) -> Result<Tensor> {
        normalize_pairs(&self.forward_inference(x, pad_mask)?)
    }

    /// L2 penalty `factor * sum ||W||^2` over decayed (dense) weights.
    pub fn l2_penalty(&self, g: &mut Graph, factor: f64) -> Result<Option<Var>> {
        if factor == 0.0 {
            return Ok(None);
        }
        let mut total: Option<Var> = None;
        for p in self.params().into_iter().filter(|p| p.decay) {
            let w = p.var(g);
            let sq = g.mul(w, w)?;
            let s = g.sum_all(sq)?;
            total = Some(match total {
                Some(t) => g.add(t, s)?,
                None => s,
            });
        }
        total.map(|t| g.scale(t, factor)).transpose()
    }

    /// Plain-value counterpart of [`SstModel::l2_penalty`].
    pub fn l2_value(&self, factor: f64) -> f64 {
        factor
            * self
                .params()
                .into_iter()
                .filter(|p| p.decay)
                .map(|p| p.value.data().iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
    }
}

impl Module for SstModel {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.embedding.visit(f);
        for b in &self.blocks {
            b.visit(f);
        }
        for d in &self.mlp {
            d.visit(f);
        }
    }

    fn visit_mut<'a>(&'a mut self, f: &mut dyn FnMut(&'a mut Param)) {
        self.embedding.visit_mut(f);
        for b in &mut self.blocks {
            b.visit_mut(f);
        }
        for d in &mut self.mlp {
            d.visit_mut(f);
        }
    }
}

/// `p_j = s_pos / (s_pos + s_neg)` for each (negative, positive) column pair.
pub fn normalize_pairs(raw: &Tensor) -> Result<Tensor> {
    let shape = raw.shape();
    if shape.len() != 2 || !shape[1].is_multiple_of(2) {
        return Err(Error::shape("normalize_pairs", format!("expected [B, 2m], got {shape:?}")));
    }
    let mut out = Vec::with_capacity(raw.numel() / 2);
    for pair in raw.data().chunks(2) {
        let (neg, pos) = (pair[0], pair[1]);
        let denom = neg + pos;
        if !(denom > 0.0) {
            return Err(Error::domain("normalize_pairs", format!("head outputs {neg} and {pos} sum to zero")));
        }
        out.push(pos / denom);
    }
    Tensor::new(&[shape[0], shape[1] / 2], out)
}

/// Graph version of the pair normalization, keeping both columns:
/// `[B, 2m] -> [B, 2m]` with each (negative, positive) pair summing to 1.
pub fn normalize_pairs_graph(g: &mut Graph, raw: Var) -> Result<Var> {
    let shape = g.shape(raw).to_vec();
    if shape.len() != 2 || !shape[1].is_multiple_of(2) {
        return Err(Error::shape("normalize_pairs", format!("expected [B, 2m], got {shape:?}")));
    }
    let (b, m) = (shape[0], shape[1] / 2);
    let pairs = g.reshape(raw, &[b, m, 2])?;
    let totals = g.sum(pairs, -1, true)?;
    let probs = g.div(pairs, totals)?;
    g.reshape(probs, &[b, 2 * m])
}
