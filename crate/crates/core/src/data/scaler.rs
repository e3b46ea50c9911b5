use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-feature minimum and maximum of the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerState {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

fn dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [b, t, f] => Ok((*b, *t, *f)),
        s => Err(Error::Data(format!("expected [samples, timesteps, features], got {s:?}"))),
    }
}

/// Fit over every (sample, timestep) row, skipping rows flagged in `pad_mask`.
pub fn fit_scaler(train: &Tensor, pad_mask: Option<&Tensor>) -> Result<ScalerState> {
    let (b, t, f) = dims(train)?;
    if let Some(m) = pad_mask {
        if m.shape() != [b, t] {
            return Err(Error::Data(format!("padding mask {:?} does not match [{b}, {t}]", m.shape())));
        }
    }
    let mut min = alloc::vec![f64::INFINITY; f];
    let mut max = alloc::vec![f64::NEG_INFINITY; f];
    for (r, row) in train.data().chunks(f.max(1)).enumerate() {
        if pad_mask.is_some_and(|m| m.data()[r] == 1.0) {
            continue;
        }
        for (k, &v) in row.iter().enumerate() {
            min[k] = min[k].min(v);
            max[k] = max[k].max(v);
        }
    }
    if b * t == 0 || min.iter().any(|v| v.is_infinite()) {
        return Err(Error::Data("scaler needs at least one unpadded training row".into()));
    }
    Ok(ScalerState { min, max })
}

impl ScalerState {
    /// `(x - min) / (max - min)` per feature; constant features map to 0.
    /// Values outside the training range are not clipped. Rows flagged in
    /// `pad_mask` are left untouched.
    pub fn apply(&self, x: &Tensor, pad_mask: Option<&Tensor>) -> Result<Tensor> {
        let (b, t, f) = dims(x)?;
        if f != self.min.len() {
            return Err(Error::Data(format!("scaler fitted on {} features, input has {f}", self.min.len())));
        }
        if let Some(m) = pad_mask {
            if m.shape() != [b, t] {
                return Err(Error::Data(format!("padding mask {:?} does not match [{b}, {t}]", m.shape())));
            }
        }
        let mut data = x.data().to_vec();
        for (r, row) in data.chunks_mut(f.max(1)).enumerate() {
            if pad_mask.is_some_and(|m| m.data()[r] == 1.0) {
                continue;
            }
            for (k, v) in row.iter_mut().enumerate() {
                let range = self.max[k] - self.min[k];
                *v = if range > 0.0 { (*v - self.min[k]) / range } else { 0.0 };
            }
        }
        Tensor::new(x.shape(), data)
    }
}
