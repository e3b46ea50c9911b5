//! JSON run configuration for `train` and `grid`.
//!
//! Keys are flat and named after the [`SstConfig`] fields plus the training
//! options. Unknown keys are rejected. In a grid file every searchable key
//! may hold either a single value or a list.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sst_core::train::{GridSpec, DEFAULT_PATIENCE};
use sst_core::SstConfig;

use crate::error::{Error, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_layers: usize,
    pub dmodel: usize,
    pub dff: usize,
    pub n_heads: usize,
    pub dropout_rate: f64,
    pub lr_factor: f64,
    pub batch_size: usize,
    pub warmup: u64,
    pub uncertainty_weighting: bool,
    pub l2_factor: f64,
    pub seed: u64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Taken from the manifest when absent; must agree with it when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_features: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_tasks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_timesteps: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let c = SstConfig::default();
        RunConfig {
            n_layers: c.n_layers,
            dmodel: c.dmodel,
            dff: c.dff,
            n_heads: c.n_heads,
            dropout_rate: c.dropout_rate,
            lr_factor: c.lr_factor,
            batch_size: c.batch_size,
            warmup: c.warmup,
            uncertainty_weighting: c.uncertainty_weighting,
            l2_factor: c.l2_factor,
            seed: c.seed,
            max_epochs: 1000,
            patience: DEFAULT_PATIENCE,
            n_features: None,
            n_tasks: None,
            max_timesteps: None,
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: path.to_path_buf(), source: e })
}

fn shape_field(name: &str, given: Option<usize>, data: usize) -> Result<usize> {
    match given {
        Some(v) if v != data => Err(Error::Config(format!("{name}: config says {v}, dataset has {data}"))),
        _ => Ok(data),
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    /// Model config for a dataset, validated.
    pub fn model_config(&self, manifest: &Manifest) -> Result<SstConfig> {
        let config = SstConfig {
            n_layers: self.n_layers,
            dmodel: self.dmodel,
            dff: self.dff,
            n_heads: self.n_heads,
            dropout_rate: self.dropout_rate,
            n_features: shape_field("n_features", self.n_features, manifest.n_features)?,
            max_timesteps: shape_field("max_timesteps", self.max_timesteps, manifest.timesteps)?,
            n_tasks: shape_field("n_tasks", self.n_tasks, manifest.n_tasks)?,
            lr_factor: self.lr_factor,
            batch_size: self.batch_size,
            warmup: self.warmup,
            uncertainty_weighting: self.uncertainty_weighting,
            l2_factor: self.l2_factor,
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// A single value or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

impl<T> From<T> for OneOrMany<T> {
    fn from(v: T) -> Self {
        OneOrMany::One(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_layers: OneOrMany<usize>,
    pub dmodel: OneOrMany<usize>,
    pub dff: OneOrMany<usize>,
    pub n_heads: OneOrMany<usize>,
    pub dropout_rate: OneOrMany<f64>,
    pub lr_factor: OneOrMany<f64>,
    pub batch_size: OneOrMany<usize>,
    pub uncertainty_weighting: OneOrMany<bool>,
    pub max_epochs: OneOrMany<usize>,
    pub warmup: u64,
    pub l2_factor: f64,
    pub seed: u64,
    pub patience: usize,
    /// Sizes of the seeded training and validation subsets.
    pub train_samples: usize,
    pub val_samples: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        let r = RunConfig::default();
        GridConfig {
            n_layers: r.n_layers.into(),
            dmodel: r.dmodel.into(),
            dff: r.dff.into(),
            n_heads: r.n_heads.into(),
            dropout_rate: r.dropout_rate.into(),
            lr_factor: r.lr_factor.into(),
            batch_size: r.batch_size.into(),
            uncertainty_weighting: r.uncertainty_weighting.into(),
            max_epochs: r.max_epochs.into(),
            warmup: r.warmup,
            l2_factor: r.l2_factor,
            seed: r.seed,
            patience: r.patience,
            train_samples: 5000,
            val_samples: 3000,
        }
    }
}

impl GridConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn spec(&self, manifest: &Manifest) -> GridSpec {
        let base = SstConfig {
            n_features: manifest.n_features,
            max_timesteps: manifest.timesteps,
            n_tasks: manifest.n_tasks,
            warmup: self.warmup,
            l2_factor: self.l2_factor,
            seed: self.seed,
            ..SstConfig::default()
        };
        GridSpec {
            base,
            n_layers: self.n_layers.values(),
            dmodel: self.dmodel.values(),
            dff: self.dff.values(),
            n_heads: self.n_heads.values(),
            dropout_rate: self.dropout_rate.values(),
            lr_factor: self.lr_factor.values(),
            batch_size: self.batch_size.values(),
            uncertainty_weighting: self.uncertainty_weighting.values(),
            max_epochs: self.max_epochs.values(),
        }
    }
}
