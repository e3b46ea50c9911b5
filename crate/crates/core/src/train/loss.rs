use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{Param, ParamIds};
use crate::tensor::{Graph, Tensor, Var};

/// Lower and upper clamp applied to probabilities before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;
pub const PROB_CEIL: f64 = 1.0 - 1e-12;

/// First id used for loss-side parameters, disjoint from model ids.
const LOSS_PARAM_BASE: usize = 1 << 40;

/// Inverse-frequency class weights `w[j][t] = N / (2 m n[j][t])`.
///
/// `counts[j]` is `[negatives, positives]` for task `j` and `total` is `N`.
pub fn class_weights(counts: &[[usize; 2]], total: usize) -> Result<Vec<[f64; 2]>> {
    let m = counts.len();
    if m == 0 {
        return Err(Error::InvalidArgument("class weights need at least one task".into()));
    }
    counts
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut w = [0.0; 2];
            for t in 0..2 {
                if c[t] == 0 {
                    let label = if t == 1 { "positive" } else { "negative" };
                    return Err(Error::Data(format!(
                        "task {} has no {label} samples; drop the task or merge it with another",
                        j + 1
                    )));
                }
                w[t] = total as f64 / (2.0 * m as f64 * c[t] as f64);
            }
            Ok(w)
        })
        .collect()
}

/// Class weights plus the trainable log-variances `s = log sigma^2`, one per
/// (task, label) column in the `[neg_0, pos_0, neg_1, pos_1, ...]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskWeights {
    pub weights: Vec<[f64; 2]>,
    pub log_var: Param,
}

impl TaskWeights {
    pub fn new(weights: Vec<[f64; 2]>) -> Self {
        let cols = 2 * weights.len();
        let mut ids = ParamIds::starting_at(LOSS_PARAM_BASE);
        let log_var = Param::new(&mut ids, "loss.log_var", Tensor::zeros(&[cols]), false);
        TaskWeights { weights, log_var }
    }

    /// All class weights 1.
    pub fn uniform(n_tasks: usize) -> Self {
        Self::new(vec![[1.0, 1.0]; n_tasks])
    }

    pub fn n_tasks(&self) -> usize {
        self.weights.len()
    }

    /// Per-column coefficients `mask * w * y / n_j`, where `n_j` is the number
    /// of samples with task `j` present in this batch.
    fn coefficients(&self, labels: &Tensor, label_mask: &Tensor) -> Result<Tensor> {
        let m = self.n_tasks();
        let b = check_label_shapes(labels, label_mask, m)?;
        let mask = label_mask.data();
        let present: Vec<f64> = (0..m).map(|j| (0..b).map(|i| mask[i * m + j]).sum()).collect();
        let y = labels.data();
        let mut coef = vec![0.0; b * 2 * m];
        for i in 0..b {
            for j in 0..m {
                if present[j] == 0.0 {
                    continue;
                }
                for t in 0..2 {
                    let c = i * 2 * m + 2 * j + t;
                    coef[c] = mask[i * m + j] * self.weights[j][t] * y[c] / present[j];
                }
            }
        }
        Tensor::new(&[b, 2 * m], coef)
    }
}

fn check_label_shapes(labels: &Tensor, label_mask: &Tensor, m: usize) -> Result<usize> {
    let ls = labels.shape();
    if ls.len() != 2 || ls[1] != 2 * m || label_mask.shape() != [ls[0], m] {
        return Err(Error::shape(
            "multitask_loss",
            format!("labels {:?} and mask {:?} do not match {m} tasks", ls, label_mask.shape()),
        ));
    }
    Ok(ls[0])
}

/// Class- and uncertainty-weighted multi-task cross-entropy.
///
/// `probs` are pair-normalized probabilities `[B, 2m]`. Per column
/// `J_jt = -(1/n_j) sum_i mask_ij w_jt y_ijt log p_ijt`; the total is
/// `sum_jt exp(-s_jt) J_jt + s_jt / 2` with uncertainty weighting and
/// `sum_jt J_jt` without.
pub fn weighted_multitask_loss(
    g: &mut Graph,
    probs: Var,
    labels: &Tensor,
    label_mask: &Tensor,
    tw: &TaskWeights,
    use_uncertainty: bool,
) -> Result<Var> {
    if g.shape(probs) != labels.shape() {
        return Err(Error::shape(
            "multitask_loss",
            format!("probabilities {:?} do not match labels {:?}", g.shape(probs), labels.shape()),
        ));
    }
    let coef = tw.coefficients(labels, label_mask)?;
    if g.value(probs).data().iter().any(|&p| !(PROB_FLOOR..=PROB_CEIL).contains(&p)) {
        log::warn!("predicted probabilities outside [{PROB_FLOOR}, {PROB_CEIL}] were clamped");
    }
    let clamped = g.clamp(probs, PROB_FLOOR, PROB_CEIL)?;
    let logp = g.log(clamped)?;
    let coef = g.constant(coef);
    let weighted = g.mul(logp, coef)?;
    let per_column = g.sum(weighted, 0, false)?;
    let per_column = g.neg(per_column)?;
    if !use_uncertainty {
        return g.sum_all(per_column);
    }
    let s = tw.log_var.var(g);
    let neg_s = g.neg(s)?;
    let precision = g.exp(neg_s)?;
    let scaled = g.mul(precision, per_column)?;
    let half_s = g.scale(s, 0.5)?;
    let terms = g.add(scaled, half_s)?;
    g.sum_all(terms)
}

/// Streaming evaluation of the same objective without a graph, so a large
/// split can be scored in chunks and still match the full-batch value.
#[derive(Debug, Clone)]
pub struct LossAccumulator {
    weights: Vec<[f64; 2]>,
    column_sums: Vec<f64>,
    present: Vec<f64>,
}

impl LossAccumulator {
    pub fn new(weights: &[[f64; 2]]) -> Self {
        let m = weights.len();
        LossAccumulator { weights: weights.to_vec(), column_sums: vec![0.0; 2 * m], present: vec![0.0; m] }
    }

    /// Add a chunk of pair-normalized probabilities `[B, 2m]`.
    pub fn add(&mut self, probs: &Tensor, labels: &Tensor, label_mask: &Tensor) -> Result<()> {
        let m = self.weights.len();
        let b = check_label_shapes(labels, label_mask, m)?;
        if probs.shape() != labels.shape() {
            return Err(Error::shape("multitask_loss", "probabilities and labels differ in shape"));
        }
        let (p, y, mask) = (probs.data(), labels.data(), label_mask.data());
        for i in 0..b {
            for j in 0..m {
                let mk = mask[i * m + j];
                self.present[j] += mk;
                for t in 0..2 {
                    let c = i * 2 * m + 2 * j + t;
                    if mk != 0.0 && y[c] != 0.0 {
                        let pc = p[c].clamp(PROB_FLOOR, PROB_CEIL);
                        self.column_sums[2 * j + t] += mk * self.weights[j][t] * y[c] * libm::log(pc);
                    }
                }
            }
        }
        Ok(())
    }

    /// Per-column partial losses `J_jt`.
    pub fn column_losses(&self) -> Vec<f64> {
        self.column_sums
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let n = self.present[c / 2];
                if n == 0.0 {
                    0.0
                } else {
                    -s / n
                }
            })
            .collect()
    }

    /// Total objective; `log_var` enables uncertainty weighting.
    pub fn total(&self, log_var: Option<&[f64]>) -> f64 {
        let cols = self.column_losses();
        match log_var {
            None => cols.iter().sum(),
            Some(s) => cols.iter().zip(s).map(|(j, s)| libm::exp(-s) * j + 0.5 * s).sum(),
        }
    }
}
