//! Soft sensing transformer core.
//!
//! A small reverse-mode autodiff engine over dense `f64` tensors, the
//! transformer-encoder layers built on it, the multi-task classifier with
//! class- and uncertainty-weighted loss, the training loop with a warmup
//! Adam schedule and early stopping, ROC/AUC evaluation, and the pure
//! data-preparation transforms. No IO lives here; file formats and the CLI
//! are in the `sst` crate.

#![no_std]

extern crate alloc;

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{SstConfig, SstModel};
pub use tensor::{Graph, Tensor, Var};

/// Deterministic RNG used throughout the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;

/// Build the crate RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    SeededRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
