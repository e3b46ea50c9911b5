//! Dataset containers and the preprocessing transforms: min-max scaling,
//! stage-aware imputation, percentile padding, time-ordered splits, label
//! counting and synthetic dataset generation.

mod impute;
mod padding;
mod scaler;
mod split;
mod synth;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use impute::{fit_imputer, impute, ImputerState, RawArray};
pub use padding::{pad_sequences, pad_to, percentile_nearest_rank, strip_padding, Padded, PADDING_PERCENTILE};
pub use scaler::{fit_scaler, ScalerState};
pub use split::{time_split, DEFAULT_SPLIT};
pub use synth::{synth_dataset, SynthData, SynthSpec};

/// Model inputs and multi-task labels for a set of samples.
///
/// `x` is `[B, T, F]`, `pad_mask` is `[B, T]` with 1 on padded steps,
/// `labels` is `[B, 2m]` with the (negative, positive) columns of each task
/// side by side, and `label_mask` is `[B, m]` with 1 where the task was
/// measured for that sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub pad_mask: Tensor,
    pub labels: Tensor,
    pub label_mask: Tensor,
}

fn is_binary(t: &Tensor) -> bool {
    t.data().iter().all(|&v| v == 0.0 || v == 1.0)
}

impl Batch {
    pub fn new(x: Tensor, pad_mask: Tensor, labels: Tensor, label_mask: Tensor) -> Result<Self> {
        let xs = x.shape();
        if xs.len() != 3 {
            return Err(Error::Data(format!("inputs must be [samples, timesteps, features], got {xs:?}")));
        }
        let b = xs[0];
        if pad_mask.shape() != [b, xs[1]] {
            return Err(Error::Data(format!("padding mask {:?} does not match inputs {xs:?}", pad_mask.shape())));
        }
        let ls = labels.shape();
        if ls.len() != 2 || ls[0] != b || !ls[1].is_multiple_of(2) || ls[1] == 0 {
            return Err(Error::Data(format!("labels {ls:?} are not [{b}, 2m]")));
        }
        let m = ls[1] / 2;
        if label_mask.shape() != [b, m] {
            return Err(Error::Data(format!("label mask {:?} is not [{b}, {m}]", label_mask.shape())));
        }
        if !is_binary(&pad_mask) || !is_binary(&labels) || !is_binary(&label_mask) {
            return Err(Error::Data("masks and labels must contain only 0 and 1".into()));
        }
        let (y, mask) = (labels.data(), label_mask.data());
        for i in 0..b {
            for j in 0..m {
                if mask[i * m + j] == 1.0 && y[i * 2 * m + 2 * j] + y[i * 2 * m + 2 * j + 1] != 1.0 {
                    return Err(Error::Data(format!("sample {i}, task {}: label is not one-hot", j + 1)));
                }
            }
        }
        Ok(Batch { x, pad_mask, labels, label_mask })
    }

    /// Derive the label mask from the labels: a task is present iff one of
    /// its two columns is set.
    pub fn from_labels(x: Tensor, pad_mask: Tensor, labels: Tensor) -> Result<Self> {
        let ls = labels.shape().to_vec();
        if ls.len() != 2 || !ls[1].is_multiple_of(2) {
            return Err(Error::Data(format!("labels {ls:?} are not [samples, 2m]")));
        }
        let mask: Vec<f64> = labels
            .data()
            .chunks(2)
            .map(|pair| if pair[0] + pair[1] > 0.0 { 1.0 } else { 0.0 })
            .collect();
        let label_mask = Tensor::new(&[ls[0], ls[1] / 2], mask)?;
        Self::new(x, pad_mask, labels, label_mask)
    }

    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timesteps(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn n_features(&self) -> usize {
        self.x.shape()[2]
    }

    pub fn n_tasks(&self) -> usize {
        self.labels.shape()[1] / 2
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(Batch {
            x: self.x.select_rows(indices)?,
            pad_mask: self.pad_mask.select_rows(indices)?,
            labels: self.labels.select_rows(indices)?,
            label_mask: self.label_mask.select_rows(indices)?,
        })
    }

    /// Contiguous range of samples.
    pub fn slice(&self, range: core::ops::Range<usize>) -> Result<Self> {
        let idx: Vec<usize> = range.collect();
        self.select(&idx)
    }

    /// Random subset of `n` samples (all of them if `n >= len`), kept in
    /// their original order.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Self> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        let mut idx = index::sample(rng, self.len(), n).into_vec();
        idx.sort_unstable();
        self.select(&idx)
    }

    /// Sample indices and positive flags of the samples where task `j` is present.
    pub fn task_labels(&self, j: usize) -> (Vec<usize>, Vec<bool>) {
        let m = self.n_tasks();
        let (y, mask) = (self.labels.data(), self.label_mask.data());
        (0..self.len())
            .filter(|&i| mask[i * m + j] == 1.0)
            .map(|i| (i, y[i * 2 * m + 2 * j + 1] == 1.0))
            .unzip()
    }

    /// Number of samples with at least one task present.
    pub fn labeled_samples(&self) -> usize {
        let m = self.n_tasks();
        self.label_mask.data().chunks(m).filter(|row| row.contains(&1.0)).count()
    }
}

/// `[negatives, positives]` per task over the present labels.
pub fn label_counts(labels: &Tensor, label_mask: &Tensor) -> Result<Vec<[usize; 2]>> {
    let ls = labels.shape();
    if ls.len() != 2 || !ls[1].is_multiple_of(2) || label_mask.shape() != [ls[0], ls[1] / 2] {
        return Err(Error::Data(format!(
            "labels {:?} and mask {:?} are inconsistent",
            ls,
            label_mask.shape()
        )));
    }
    let m = ls[1] / 2;
    let mut counts = alloc::vec![[0usize; 2]; m];
    let (y, mask) = (labels.data(), label_mask.data());
    for i in 0..ls[0] {
        for j in 0..m {
            if mask[i * m + j] == 1.0 {
                for t in 0..2 {
                    if y[i * 2 * m + 2 * j + t] == 1.0 {
                        counts[j][t] += 1;
                    }
                }
            }
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn batch() -> Batch {
        let x = Tensor::from_fn(&[3, 2, 2], |i| i as f64).unwrap();
        let pad = Tensor::new(&[3, 2], vec![0., 0., 0., 1., 0., 0.]).unwrap();
        let labels = Tensor::new(&[3, 4], vec![1., 0., 0., 1., 0., 1., 0., 0., 0., 1., 1., 0.]).unwrap();
        Batch::from_labels(x, pad, labels).unwrap()
    }

    #[test]
    fn derives_label_mask() {
        let b = batch();
        assert_eq!(b.label_mask.data(), &[1., 1., 1., 0., 1., 1.]);
        assert_eq!(b.labeled_samples(), 3);
        assert_eq!(b.task_labels(1), (vec![0, 2], vec![true, false]));
    }

    #[test]
    fn counts_and_conservation() {
        let b = batch();
        let c = label_counts(&b.labels, &b.label_mask).unwrap();
        assert_eq!(c, vec![[1, 2], [1, 1]]);
        let present: f64 = b.label_mask.data().iter().sum();
        assert_eq!(c.iter().map(|p| p[0] + p[1]).sum::<usize>(), present as usize);
        let empty = label_counts(&b.labels, &Tensor::zeros(&[3, 2])).unwrap();
        assert_eq!(empty, vec![[0, 0], [0, 0]]);
    }

    #[test]
    fn rejects_non_one_hot() {
        let x = Tensor::zeros(&[1, 1, 1]);
        let labels = Tensor::new(&[1, 2], vec![1., 1.]).unwrap();
        assert!(Batch::from_labels(x, Tensor::zeros(&[1, 1]), labels).is_err());
    }

    #[test]
    fn select_and_sample() {
        let b = batch();
        let s = b.select(&[2, 0]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.labels.data()[..4], b.labels.data()[8..]);
        let mut rng = crate::seeded_rng(0);
        let sub = b.sample(2, &mut rng).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(b.sample(10, &mut rng).unwrap(), b);
    }
}
