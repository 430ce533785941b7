pub mod config;
pub mod data;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod vit;

pub use config::{ModelConfig, TokenGrid};
pub use error::{Error, Result};
