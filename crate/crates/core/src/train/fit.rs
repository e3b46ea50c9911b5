use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{class_weights, weighted_multitask_loss, Adam, EarlyStopping, LossAccumulator, LrSchedule, TaskWeights};
use super::DEFAULT_PATIENCE;
use crate::data::{label_counts, Batch};
use crate::error::{Error, Result};
use crate::metrics::roc_auc;
use crate::model::{normalize_pairs_graph, SstModel};
use crate::nn::{Module, Param};
use crate::tensor::{Graph, Tensor};
use crate::{derive_seed, seeded_rng};

const SHUFFLE_STREAM: u64 = 0x5348;
const DROPOUT_STREAM: u64 = 0xd209;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { max_epochs: 1000, patience: DEFAULT_PATIENCE }
    }
}

/// Losses and validation AUCs after one epoch. `step` counts optimizer
/// updates since the start of training.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were restored, `None` if no epoch ran.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub class_weights: Vec<[f64; 2]>,
    /// Validation scores of the returned (restored) weights.
    pub val: Evaluation,
    pub log_var: Vec<f64>,
}

/// Objective and per-task AUC of a model on a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub task_auc: Vec<Option<f64>>,
    /// Positive-class probabilities `[n, m]`.
    pub probs: Tensor,
}

impl Evaluation {
    pub fn mean_auc(&self) -> Option<f64> {
        let scored: Vec<f64> = self.task_auc.iter().flatten().copied().collect();
        (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64)
    }
}

/// Score `data` in chunks of `chunk` samples. The loss includes the
/// uncertainty terms when enabled in the model config and the L2 penalty.
pub fn evaluate(model: &SstModel, tw: &TaskWeights, data: &Batch, chunk: usize) -> Result<Evaluation> {
    let cfg = model.config();
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    if data.n_tasks() != cfg.n_tasks || tw.n_tasks() != cfg.n_tasks {
        return Err(Error::Data(format!(
            "model has {} tasks, data has {} and weights have {}",
            cfg.n_tasks,
            data.n_tasks(),
            tw.n_tasks()
        )));
    }
    let m = cfg.n_tasks;
    let n = data.len();
    let chunk = chunk.max(1);
    let mut acc = LossAccumulator::new(&tw.weights);
    let mut positive = Vec::with_capacity(n * m);
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let part = data.slice(start..end)?;
        let raw = model.forward_inference(&part.x, &part.pad_mask)?;
        let mut pairs = Vec::with_capacity(raw.numel());
        for pair in raw.data().chunks(2) {
            let total = pair[0] + pair[1];
            pairs.push(pair[0] / total);
            pairs.push(pair[1] / total);
            positive.push(pair[1] / total);
        }
        acc.add(&Tensor::new(raw.shape(), pairs)?, &part.labels, &part.label_mask)?;
        start = end;
    }
    let log_var = cfg.uncertainty_weighting.then(|| tw.log_var.value.data());
    let loss = acc.total(log_var) + model.l2_value(cfg.l2_factor);
    let probs = Tensor::new(&[n, m], positive)?;
    let task_auc = (0..m)
        .map(|j| {
            let (idx, labels) = data.task_labels(j);
            let scores: Vec<f64> = idx.iter().map(|&i| probs.data()[i * m + j]).collect();
            roc_auc(&scores, &labels).ok()
        })
        .collect();
    Ok(Evaluation { loss, task_auc, probs })
}

/// Class weights from the training split's label counts, with `N` the number
/// of training samples that carry at least one label.
pub fn training_weights(train: &Batch) -> Result<TaskWeights> {
    let counts = label_counts(&train.labels, &train.label_mask)?;
    Ok(TaskWeights::new(class_weights(&counts, train.labeled_samples())?))
}

fn diverged(epoch: usize, step: u64, reason: impl ToString, completed: &[EpochRecord]) -> Error {
    Error::Diverged { epoch, step, reason: reason.to_string(), completed: completed.to_vec() }
}

/// Train `model` with minibatch Adam, early stopping on validation loss,
/// and restore the best weights.
pub fn fit(model: &mut SstModel, train: &Batch, val: &Batch, opts: &TrainOptions) -> Result<TrainReport> {
    let cfg = model.config().clone();
    if train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }
    for (name, b) in [("training", train), ("validation", val)] {
        if b.n_features() != cfg.n_features || b.n_tasks() != cfg.n_tasks {
            return Err(Error::Data(format!(
                "{name} data has {} features and {} tasks, config expects {} and {}",
                b.n_features(),
                b.n_tasks(),
                cfg.n_features,
                cfg.n_tasks
            )));
        }
    }
    let mut tw = training_weights(train)?;
    let schedule = LrSchedule::new(cfg.lr_factor, cfg.dmodel, cfg.warmup)?;
    let use_s = cfg.uncertainty_weighting;

    let mut sizes: Vec<usize> = model.params().iter().map(|p| p.value.numel()).collect();
    if use_s {
        sizes.push(tw.log_var.value.numel());
    }
    let mut adam = Adam::new(&sizes);
    let mut shuffle_rng = seeded_rng(derive_seed(cfg.seed, SHUFFLE_STREAM));
    let mut dropout_rng = seeded_rng(derive_seed(cfg.seed, DROPOUT_STREAM));
    let mut stopper: EarlyStopping<(SstModel, TaskWeights)> = EarlyStopping::new(opts.patience);
    let mut records: Vec<EpochRecord> = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch_size = cfg.batch_size.max(1);

    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        let mut lr = 0.0;
        for idx in order.chunks(batch_size) {
            let batch = train.select(idx)?;
            if batch.label_mask.data().iter().all(|&v| v == 0.0) {
                continue;
            }
            let step = adam.steps() + 1;
            lr = schedule.rate(step)?;
            let mut g = Graph::new();
            let objective = (|| -> Result<_> {
                let raw = model.forward(&mut g, &batch.x, &batch.pad_mask, true, &mut dropout_rng)?;
                let probs = normalize_pairs_graph(&mut g, raw)?;
                let mut loss = weighted_multitask_loss(&mut g, probs, &batch.labels, &batch.label_mask, &tw, use_s)?;
                if let Some(l2) = model.l2_penalty(&mut g, cfg.l2_factor)? {
                    loss = g.add(loss, l2)?;
                }
                g.backward(loss)?;
                Ok(loss)
            })();
            let loss = match objective {
                Ok(loss) => loss,
                Err(e @ Error::NonFinite { .. }) | Err(e @ Error::Domain { .. }) => {
                    return Err(diverged(epoch, step, e, &records));
                }
                Err(e) => return Err(e),
            };
            let value = g.value(loss).item()?;
            loss_sum += value;
            batches += 1;

            let mut grads: Vec<Vec<f64>> = model
                .params()
                .iter()
                .map(|p| g.param_grad(p.id()).map_or_else(|| vec![0.0; p.value.numel()], <[f64]>::to_vec))
                .collect();
            if use_s {
                let p = &tw.log_var;
                grads.push(g.param_grad(p.id()).map_or_else(|| vec![0.0; p.value.numel()], <[f64]>::to_vec));
            }
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            let mut params: Vec<&mut Param> = model.params_mut();
            if use_s {
                params.push(&mut tw.log_var);
            }
            match adam.step(&mut params, &grad_refs, lr) {
                Ok(()) => {}
                Err(e @ (Error::NonFiniteGradient(_) | Error::NonFinite { .. })) => {
                    return Err(diverged(epoch, step, e, &records));
                }
                Err(e) => return Err(e),
            }
        }

        let eval = evaluate(model, &tw, val, batch_size.max(256))?;
        if !eval.loss.is_finite() {
            return Err(diverged(epoch, adam.steps(), "validation loss is not finite", &records));
        }
        let record = EpochRecord {
            epoch,
            step: adam.steps(),
            lr,
            train_loss: if batches > 0 { loss_sum / batches as f64 } else { f64::NAN },
            val_loss: eval.loss,
            val_auc: eval.task_auc,
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5} lr {:.3e}",
            record.train_loss,
            record.val_loss,
            record.lr
        );
        records.push(record);
        stopper.observe(epoch, eval.loss, || (model.clone(), tw.clone()));
        if stopper.should_stop() {
            break;
        }
    }

    let stopped_early = stopper.should_stop() && records.len() < opts.max_epochs;
    let best_epoch = stopper.best_epoch();
    if let Some((best_model, best_tw)) = stopper.take_snapshot() {
        *model = best_model;
        tw = best_tw;
    }
    let val_eval = evaluate(model, &tw, val, batch_size.max(256))?;
    Ok(TrainReport {
        epochs: records,
        best_epoch,
        stopped_early,
        class_weights: tw.weights.clone(),
        val: val_eval,
        log_var: tw.log_var.value.data().to_vec(),
    })
}

/// Human-readable one-line summary of an evaluation.
pub fn describe(eval: &Evaluation) -> String {
    let aucs: Vec<String> = eval
        .task_auc
        .iter()
        .map(|a| a.map_or_else(|| String::from("—"), |v| format!("{v:.3}")))
        .collect();
    format!("loss {:.5}, AUC [{}]", eval.loss, aucs.join(", "))
}
