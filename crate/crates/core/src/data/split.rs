use alloc::format;
use core::ops::Range;

use crate::error::{Error, Result};

/// Training, validation and test weeks of the reference data.
pub const DEFAULT_SPLIT: [usize; 3] = [70, 14, 8];

/// Contiguous train / validation / test ranges over time-ordered samples.
///
/// Validation and test sizes are `floor(n * r / sum(r))`; the remainder goes
/// to training.
pub fn time_split(n: usize, ratios: [usize; 3]) -> Result<[Range<usize>; 3]> {
    let total: usize = ratios.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("split ratios sum to zero".into()));
    }
    let val = n * ratios[1] / total;
    let test = n * ratios[2] / total;
    let train = n - val - test;
    let sizes = [train, val, test];
    if let Some(k) = (0..3).find(|&k| ratios[k] > 0 && sizes[k] == 0) {
        let name = ["training", "validation", "test"][k];
        return Err(Error::Data(format!("{n} samples are too few for a non-empty {name} split")));
    }
    Ok([0..train, train..train + val, train + val..n])
}
