use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PADDING_PERCENTILE: f64 = 99.0;

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 * n)` of the sorted data.
pub fn percentile_nearest_rank(values: &[usize], p: f64) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::Data("percentile of an empty set".into()));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {p} outside (0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = libm::ceil(p / 100.0 * sorted.len() as f64) as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Padded inputs; `x` carries one extra trailing feature that is 1 on padded steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded {
    pub x: Tensor,
    pub pad_mask: Tensor,
    pub timesteps: usize,
}

/// Pad to the 99th-percentile length. Each sequence is a list of timesteps
/// of equal feature width; longer sequences keep their earliest steps.
pub fn pad_sequences(seqs: &[Vec<Vec<f64>>]) -> Result<Padded> {
    let lengths: Vec<usize> = seqs.iter().map(Vec::len).collect();
    let t = percentile_nearest_rank(&lengths, PADDING_PERCENTILE)?;
    pad_to(seqs, t)
}

/// Pad or truncate every sequence to exactly `t` steps.
pub fn pad_to(seqs: &[Vec<Vec<f64>>], t: usize) -> Result<Padded> {
    if seqs.is_empty() {
        return Err(Error::Data("no sequences to pad".into()));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("padded length must be positive".into()));
    }
    let f = seqs.iter().flat_map(|s| s.first()).map(Vec::len).next().unwrap_or(0);
    let width = f + 1;
    let mut x = Vec::with_capacity(seqs.len() * t * width);
    let mut mask = Vec::with_capacity(seqs.len() * t);
    for (i, seq) in seqs.iter().enumerate() {
        if seq.is_empty() {
            return Err(Error::Data(format!("sequence {i} is empty")));
        }
        for s in 0..t {
            match seq.get(s) {
                Some(step) => {
                    if step.len() != f {
                        return Err(Error::Data(format!("sequence {i} step {s} has {} features, expected {f}", step.len())));
                    }
                    x.extend_from_slice(step);
                    x.push(0.0);
                    mask.push(0.0);
                }
                None => {
                    x.extend(core::iter::repeat_n(0.0, f));
                    x.push(1.0);
                    mask.push(1.0);
                }
            }
        }
    }
    Ok(Padded {
        x: Tensor::new(&[seqs.len(), t, width], x)?,
        pad_mask: Tensor::new(&[seqs.len(), t], mask)?,
        timesteps: t,
    })
}

/// Inverse of [`pad_to`]: drop padded steps and the indicator column.
pub fn strip_padding(x: &Tensor, pad_mask: &Tensor) -> Result<Vec<Vec<Vec<f64>>>> {
    let [b, t, w] = match x.shape() {
        [b, t, w] if *w >= 1 => [*b, *t, *w],
        s => return Err(Error::Data(format!("expected [samples, timesteps, features + 1], got {s:?}"))),
    };
    if pad_mask.shape() != [b, t] {
        return Err(Error::Data("padding mask does not match inputs".into()));
    }
    Ok((0..b)
        .map(|i| {
            (0..t)
                .filter(|&s| pad_mask.data()[i * t + s] == 0.0)
                .map(|s| x.data()[(i * t + s) * w..(i * t + s) * w + w - 1].to_vec())
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn seq(len: usize, f: usize, base: f64) -> Vec<Vec<f64>> {
        (0..len).map(|s| (0..f).map(|k| base + (s * f + k) as f64).collect()).collect()
    }

    #[test]
    fn outlier_is_truncated() {
        let mut seqs: Vec<_> = (0..100).map(|i| seq(2, 3, i as f64)).collect();
        seqs.push(seq(50, 3, 0.0));
        let p = pad_sequences(&seqs).unwrap();
        assert_eq!(p.timesteps, 2);
        assert_eq!(p.x.shape(), &[101, 2, 4]);
        assert!(p.pad_mask.data().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn equal_lengths_need_no_padding() {
        let seqs: Vec<_> = (0..7).map(|i| seq(4, 2, i as f64)).collect();
        let p = pad_sequences(&seqs).unwrap();
        assert_eq!(p.timesteps, 4);
        assert!(p.pad_mask.data().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn short_sequence_is_padded_with_indicator() {
        let p = pad_to(&[seq(1, 2, 5.0)], 2).unwrap();
        assert_eq!(p.pad_mask.data(), &[0.0, 1.0]);
        assert_eq!(p.x.data(), &[5.0, 6.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn errors() {
        assert!(pad_sequences(&[]).is_err());
        assert!(pad_to(&[vec![]], 2).is_err());
        assert!(pad_to(&[vec![vec![1.0], vec![1.0, 2.0]]], 2).is_err());
    }

    #[test]
    fn strip_recovers_input() {
        let seqs = vec![seq(1, 2, 0.0), seq(3, 2, 10.0), seq(2, 2, 20.0)];
        let p = pad_to(&seqs, 3).unwrap();
        assert_eq!(strip_padding(&p.x, &p.pad_mask).unwrap(), seqs);
    }

    #[test]
    fn nearest_rank() {
        assert_eq!(percentile_nearest_rank(&[1, 2, 3, 4], 50.0).unwrap(), 2);
        assert_eq!(percentile_nearest_rank(&[5], 99.0).unwrap(), 5);
        assert!(percentile_nearest_rank(&[], 99.0).is_err());
    }
}
