use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed sinusoidal position table, added to the embedded input.
///
/// Row `pos`, column `2i` holds `sin(pos / 10000^(2i/dmodel))` and column
/// `2i + 1` holds the matching cosine.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    dmodel: usize,
    max_len: usize,
    table: Tensor,
}

impl PositionalEncoding {
    pub fn new(max_len: usize, dmodel: usize) -> Self {
        let mut data = Vec::with_capacity(max_len * dmodel);
        for pos in 0..max_len {
            for col in 0..dmodel {
                let pair = (col / 2) * 2;
                let angle = pos as f64 / libm::pow(10000.0, pair as f64 / dmodel as f64);
                data.push(if col % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) });
            }
        }
        PositionalEncoding { dmodel, max_len, table: Tensor::from_parts(alloc::vec![max_len, dmodel], data) }
    }

    pub fn dmodel(&self) -> usize {
        self.dmodel
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// First `len` rows, shape `[len, dmodel]`.
    pub fn lookup(&self, len: usize) -> Result<Tensor> {
        if len > self.max_len {
            return Err(Error::shape(
                "positional_encoding",
                format!("sequence length {len} exceeds maximum {}", self.max_len),
            ));
        }
        Ok(Tensor::from_parts(alloc::vec![len, self.dmodel], self.table.data()[..len * self.dmodel].to_vec()))
    }
}
