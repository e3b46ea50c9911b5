//! File formats, dataset ingestion and the command-line interface around
//! [`sst_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod npy;
pub mod report;

pub use error::{Error, Result};
