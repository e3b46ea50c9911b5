use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Raw `[samples, timesteps, features]` values where NaN marks a missing reading.
#[derive(Debug, Clone, PartialEq)]
pub struct RawArray {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

impl RawArray {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Data(format!("shape {shape:?} does not hold {} values", data.len())));
        }
        if data.iter().any(|v| v.is_infinite()) {
            return Err(Error::Data("raw values may be NaN (missing) but not infinite".into()));
        }
        Ok(RawArray { shape, data })
    }
}

/// Fallback value per feature: the mode of the observed training values.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputerState {
    pub modes: Vec<f64>,
}

/// Per-feature mode over non-missing training values; ties resolve to the smallest value.
pub fn fit_imputer(train: &RawArray) -> Result<ImputerState> {
    let f = train.shape[2];
    let mut modes = Vec::with_capacity(f);
    for k in 0..f {
        let mut counts: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        for v in train.data.iter().skip(k).step_by(f.max(1)).filter(|v| !v.is_nan()) {
            // normalize -0.0 so it counts with 0.0
            let v = if *v == 0.0 { 0.0 } else { *v };
            counts.entry(v.to_bits()).or_insert((v, 0)).1 += 1;
        }
        let mode = counts
            .values()
            .fold(None::<(f64, usize)>, |best, &(v, c)| match best {
                Some((bv, bc)) if bc > c || (bc == c && bv <= v) => Some((bv, bc)),
                _ => Some((v, c)),
            })
            .map(|(v, _)| v)
            .ok_or_else(|| Error::Data(format!("feature {k} is missing in every training row")))?;
        modes.push(mode);
    }
    Ok(ImputerState { modes })
}

/// Forward fill then backward fill within each run of timesteps that share a
/// stage id, per sample and feature; anything still missing takes the
/// feature mode. `stage_ids` is `[samples * timesteps]`.
pub fn impute(state: &ImputerState, x: &RawArray, stage_ids: &[u32]) -> Result<Tensor> {
    let [b, t, f] = x.shape;
    if state.modes.len() != f {
        return Err(Error::Data(format!("imputer fitted on {} features, input has {f}", state.modes.len())));
    }
    if stage_ids.len() != b * t {
        return Err(Error::Data(format!("expected {} stage ids, got {}", b * t, stage_ids.len())));
    }
    let mut data = x.data.clone();
    let at = |i: usize, s: usize, k: usize| (i * t + s) * f + k;
    for i in 0..b {
        let stages = &stage_ids[i * t..(i + 1) * t];
        for k in 0..f {
            for s in 1..t {
                if data[at(i, s, k)].is_nan() && stages[s] == stages[s - 1] {
                    data[at(i, s, k)] = data[at(i, s - 1, k)];
                }
            }
            for s in (0..t.saturating_sub(1)).rev() {
                if data[at(i, s, k)].is_nan() && stages[s] == stages[s + 1] {
                    data[at(i, s, k)] = data[at(i, s + 1, k)];
                }
            }
        }
    }
    for (idx, v) in data.iter_mut().enumerate() {
        if v.is_nan() {
            *v = state.modes[idx % f];
        }
    }
    Tensor::new(&[b, t, f], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn state(mode: f64) -> ImputerState {
        ImputerState { modes: vec![mode] }
    }

    fn one(values: &[f64]) -> RawArray {
        RawArray::new([1, values.len(), 1], values.to_vec()).unwrap()
    }

    #[test]
    fn fill_directions_and_mode() {
        let same = [0u32, 0];
        assert_eq!(impute(&state(9.0), &one(&[f64::NAN, 3.0]), &same).unwrap().data(), &[3.0, 3.0]);
        assert_eq!(impute(&state(9.0), &one(&[5.0, f64::NAN]), &same).unwrap().data(), &[5.0, 5.0]);
        assert_eq!(impute(&state(2.0), &one(&[f64::NAN, f64::NAN]), &same).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn fills_do_not_cross_stages() {
        let x = one(&[1.0, f64::NAN, f64::NAN, 4.0]);
        let y = impute(&state(7.0), &x, &[0, 0, 1, 1]).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 4.0, 4.0]);
        let y = impute(&state(7.0), &one(&[1.0, f64::NAN]), &[0, 1]).unwrap();
        assert_eq!(y.data(), &[1.0, 7.0]);
    }

    #[test]
    fn mode_prefers_smallest_on_ties() {
        let train = RawArray::new([1, 6, 1], vec![3.0, 1.0, 3.0, 1.0, f64::NAN, 2.0]).unwrap();
        assert_eq!(fit_imputer(&train).unwrap().modes, vec![1.0]);
        let missing = RawArray::new([1, 2, 1], vec![f64::NAN, f64::NAN]).unwrap();
        assert!(fit_imputer(&missing).is_err());
    }

    #[test]
    fn idempotent() {
        let x = RawArray::new([2, 3, 2], vec![f64::NAN, 1.0, 2.0, f64::NAN, f64::NAN, 5.0, 1.0, 1.0, f64::NAN, f64::NAN, 3.0, 3.0])
            .unwrap();
        let st = fit_imputer(&x).unwrap();
        let stages = [0, 0, 1, 2, 2, 2];
        let once = impute(&st, &x, &stages).unwrap();
        let again = impute(&st, &RawArray::new([2, 3, 2], once.data().to_vec()).unwrap(), &stages).unwrap();
        assert_eq!(once, again);
    }
}
