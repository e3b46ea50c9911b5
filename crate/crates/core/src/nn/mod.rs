//! Encoder building blocks: dense layers, sinusoidal positions, masked
//! multi-head attention, layer normalization, dropout and masked pooling.

mod attention;
mod dense;
mod encoder;
mod functional;
mod norm;
mod param;
mod positional;

pub use attention::MultiHeadAttention;
pub use dense::{Activation, DenseLayer};
pub use encoder::EncoderBlock;
pub use functional::{dropout, global_average_pool, MASK_NEG};
pub use norm::LayerNorm;
pub use param::{glorot_uniform, Module, Param, ParamIds};
pub use positional::PositionalEncoding;
