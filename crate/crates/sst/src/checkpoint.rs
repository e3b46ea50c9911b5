//! Binary checkpoint of a trained model.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic  b"SSTCKPT\0"
//! u32    format version
//! u64    length of the JSON metadata, then the metadata (config, loss state)
//! u64    number of parameter tensors
//! per tensor: u64 element count, then that many f64 values
//! ```
//!
//! Tensors appear in the model's parameter order. Writing is deterministic,
//! so identical models produce identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sst_core::nn::Module;
use sst_core::{SstConfig, SstModel};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SSTCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    config: SstConfig,
    class_weights: Vec<[f64; 2]>,
    log_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SstModel,
    pub class_weights: Vec<[f64; 2]>,
    pub log_var: Vec<f64>,
}

impl Checkpoint {
    pub fn config(&self) -> &SstConfig {
        self.model.config()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = Metadata {
            config: self.model.config().clone(),
            class_weights: self.class_weights.clone(),
            log_var: self.log_var.clone(),
        };
        let json = serde_json::to_vec(&meta).expect("metadata serializes");
        let params = self.model.params();
        let mut out = Vec::with_capacity(32 + json.len() + 8 * self.model.param_count() + 8 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&(p.value.numel() as u64).to_le_bytes());
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |message: String| Error::Checkpoint { path: path.to_path_buf(), message };
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).map_err(&err)? != MAGIC {
            return Err(err("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.take(4).map_err(&err)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(err(format!("unsupported checkpoint version {version}, expected {FORMAT_VERSION}")));
        }
        let json_len = r.u64().map_err(&err)? as usize;
        let meta: Metadata = serde_json::from_slice(r.take(json_len).map_err(&err)?)
            .map_err(|e| err(format!("invalid metadata: {e}")))?;
        let mut model = SstModel::new(&meta.config).map_err(|e| err(format!("invalid config: {e}")))?;
        let count = r.u64().map_err(&err)? as usize;
        let mut params = model.params_mut();
        if count != params.len() {
            return Err(err(format!("holds {count} tensors, the config implies {}", params.len())));
        }
        for p in params.iter_mut() {
            let n = r.u64().map_err(&err)? as usize;
            if n != p.value.numel() {
                return Err(err(format!("tensor `{}` has {n} values, expected {}", p.name(), p.value.numel())));
            }
            let raw = r.take(n.checked_mul(8).ok_or_else(|| err("tensor size overflows".into()))?).map_err(&err)?;
            let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            p.value.assign(&values).map_err(|e| err(format!("tensor `{}`: {e}", p.name())))?;
        }
        if r.pos != bytes.len() {
            return Err(err(format!("{} trailing bytes after the last tensor", bytes.len() - r.pos)));
        }
        let m = meta.config.n_tasks;
        if meta.class_weights.len() != m || meta.log_var.len() != 2 * m {
            return Err(err(format!("loss state does not match {m} tasks")));
        }
        Ok(Checkpoint { model, class_weights: meta.class_weights, log_var: meta.log_var })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format!("truncated at byte {}: needed {n} more bytes, {} left", self.pos, self.bytes.len() - self.pos)
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Check that a checkpoint fits data with the given shape, naming the
/// expected and found values on mismatch.
pub fn check_compatible(config: &SstConfig, n_features: usize, n_tasks: usize, timesteps: usize) -> Result<()> {
    let mut problems = Vec::new();
    if config.n_features != n_features {
        problems.push(format!("n_features: expected {}, found {n_features}", config.n_features));
    }
    if config.n_tasks != n_tasks {
        problems.push(format!("n_tasks: expected {}, found {n_tasks}", config.n_tasks));
    }
    if timesteps > config.max_timesteps {
        problems.push(format!("timesteps: expected at most {}, found {timesteps}", config.max_timesteps));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!("checkpoint does not match the dataset ({})", problems.join("; "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt() -> Checkpoint {
        let cfg = SstConfig {
            n_layers: 1,
            dmodel: 4,
            dff: 6,
            n_heads: 2,
            n_features: 3,
            max_timesteps: 2,
            n_tasks: 2,
            ..SstConfig::default()
        };
        Checkpoint {
            model: SstModel::new(&cfg).unwrap(),
            class_weights: vec![[0.5, 2.0], [1.0, 1.0]],
            log_var: vec![0.1, -0.2, 0.0, 0.3],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = ckpt();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Path::new("m")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_and_corruption() {
        let bytes = ckpt().to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3], Path::new("m")).unwrap_err();
        assert!(format!("{err}").contains("truncated"), "{err}");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad, Path::new("m")).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, Path::new("m")).is_err());
    }

    #[test]
    fn compatibility_names_both_values() {
        let c = ckpt();
        let err = check_compatible(c.config(), 5, 2, 2).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("expected 3") && msg.contains("found 5"), "{msg}");
        assert!(check_compatible(c.config(), 3, 2, 1).is_ok());
    }
}
