//! Decoder-only transformer over the episode vocabulary.

pub mod checkpoint;
pub mod decode;
pub mod gpt;
pub mod ops;
pub mod params;
pub mod scalar;

pub use checkpoint::Checkpoint;
pub use decode::Decoder;
pub use gpt::{backward, forward, loss_masked, ForwardPass, TokenBatch};
pub use params::{ModelConfig, ModelParams, ParamLayout};
pub use scalar::Scalar;
