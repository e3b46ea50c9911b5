//! Dataset manifest and loading of NPY splits into [`Batch`]es.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sst_core::data::Batch;
use sst_core::Tensor;

use crate::error::{Error, Result};
use crate::npy::read_npy;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFiles {
    /// Inputs `[n_sample, time_step, features]`, relative to the manifest.
    pub x: PathBuf,
    /// Labels `[n_sample, 2 * n_tasks]`, relative to the manifest.
    pub y: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: SplitFiles,
    pub val: SplitFiles,
    pub test: SplitFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub n_tasks: usize,
    /// Feature width including the padding indicator when present.
    pub n_features: usize,
    pub timesteps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Whether the last feature marks padded timesteps.
    pub padding_indicator: bool,
    pub splits: Splits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split {s:?} (expected train, val or test)")),
        }
    }
}

/// Irregularities found while deriving the padding mask from the indicator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    /// Indicator values other than exactly 0 or 1 (thresholded at 0.5).
    pub non_binary_indicator: usize,
    /// Padded steps whose other features are not all zero.
    pub nonzero_padded_steps: usize,
    /// Real steps that follow a padded step in the same sample.
    pub interior_padding: usize,
    /// Samples with every step padded.
    pub fully_padded_samples: usize,
}

impl IngestReport {
    pub fn is_clean(&self) -> bool {
        *self == IngestReport::default()
    }
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub root: PathBuf,
    pub path: PathBuf,
}

impl Dataset {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest { path: path.clone(), message: e.to_string() })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::Manifest {
                path,
                message: format!("unsupported version {}, expected {MANIFEST_VERSION}", manifest.version),
            });
        }
        if manifest.n_tasks == 0 || manifest.n_features == 0 || manifest.timesteps == 0 {
            return Err(Error::Manifest { path, message: "n_tasks, n_features and timesteps must be positive".into() });
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Dataset { manifest, root, path })
    }

    fn files(&self, split: Split) -> &SplitFiles {
        match split {
            Split::Train => &self.manifest.splits.train,
            Split::Val => &self.manifest.splits.val,
            Split::Test => &self.manifest.splits.test,
        }
    }

    fn bad(&self, message: String) -> Error {
        Error::Manifest { path: self.path.clone(), message }
    }

    /// Read one split. The padding mask comes from the indicator feature
    /// when the manifest declares one, otherwise every step counts as real.
    pub fn load(&self, split: Split) -> Result<(Batch, IngestReport)> {
        let m = &self.manifest;
        let files = self.files(split);
        let (x_path, y_path) = (self.root.join(&files.x), self.root.join(&files.y));
        let x = read_npy(&x_path)?;
        let y = read_npy(&y_path)?;
        let name = split.name();
        if x.shape.len() != 3 || x.shape[1] != m.timesteps || x.shape[2] != m.n_features {
            return Err(self.bad(format!(
                "{name} inputs have shape {:?}, expected [n, {}, {}]",
                x.shape, m.timesteps, m.n_features
            )));
        }
        let n = x.shape[0];
        let y_ok = match y.shape.as_slice() {
            [a, b] => *a == n && *b == 2 * m.n_tasks,
            [a, b, 2] => *a == n && *b == m.n_tasks,
            _ => false,
        };
        if !y_ok {
            return Err(self.bad(format!(
                "{name} labels have shape {:?}, expected [{n}, {}]",
                y.shape,
                2 * m.n_tasks
            )));
        }
        let xs = x.to_f64();
        if let Some(i) = xs.iter().position(|v| !v.is_finite()) {
            return Err(self.bad(format!("{name} inputs contain a non-finite value at flat index {i}")));
        }
        let ys = y.to_f64();
        if let Some(i) = ys.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(self.bad(format!("{name} labels contain {} at flat index {i}; expected 0 or 1", ys[i])));
        }
        let (t, f) = (m.timesteps, m.n_features);
        let (pad, report) = if m.padding_indicator { padding_from_indicator(&xs, n, t, f) } else { (vec![0.0; n * t], IngestReport::default()) };
        if !report.is_clean() {
            log::warn!("{name} split padding discrepancies: {report:?}");
        }
        let batch = Batch::from_labels(
            Tensor::new(&[n, t, f], xs)?,
            Tensor::new(&[n, t], pad)?,
            Tensor::new(&[n, 2 * m.n_tasks], ys)?,
        )
        .map_err(|e| self.bad(format!("{name} split: {e}")))?;
        Ok((batch, report))
    }
}

fn padding_from_indicator(x: &[f64], n: usize, t: usize, f: usize) -> (Vec<f64>, IngestReport) {
    let mut report = IngestReport::default();
    let mut pad = vec![0.0; n * t];
    for i in 0..n {
        let mut seen_pad = false;
        let mut all_padded = true;
        for s in 0..t {
            let row = &x[(i * t + s) * f..(i * t + s + 1) * f];
            let ind = row[f - 1];
            if ind != 0.0 && ind != 1.0 {
                report.non_binary_indicator += 1;
            }
            if ind > 0.5 {
                pad[i * t + s] = 1.0;
                seen_pad = true;
                if row[..f - 1].iter().any(|&v| v != 0.0) {
                    report.nonzero_padded_steps += 1;
                }
            } else {
                all_padded = false;
                if seen_pad {
                    report.interior_padding += 1;
                }
            }
        }
        if all_padded {
            report.fully_padded_samples += 1;
        }
    }
    (pad, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_discrepancies_are_counted() {
        // 2 samples, 2 steps, 2 features (last is the indicator)
        let x = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 3.0, 0.7];
        let (pad, report) = padding_from_indicator(&x, 2, 2, 2);
        assert_eq!(pad, vec![0.0, 1.0, 1.0, 1.0]);
        assert_eq!(report.non_binary_indicator, 1);
        assert_eq!(report.nonzero_padded_steps, 1);
        assert_eq!(report.fully_padded_samples, 1);
        assert_eq!(report.interior_padding, 0);
    }

    #[test]
    fn split_names() {
        assert_eq!("val".parse::<Split>().unwrap(), Split::Val);
        assert!("dev".parse::<Split>().is_err());
    }
}
