//! Tube patching, token embedding, attention and the shared encoder.

pub mod attention;
pub mod embedding;
pub mod encoder;
pub mod layers;
pub mod patching;

pub use attention::{multi_head_attention, AttentionOutput, AttentionParams};
pub use embedding::{sinusoidal_positions, Embedding};
pub use encoder::{Encoder, EncoderBlock};
pub use layers::{LayerNorm, Linear, Mlp, INIT_STD};
pub use patching::{patch, unpatch};
