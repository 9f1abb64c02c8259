//! Player-conditioned next-event transformer for football event streams.

pub mod analytics;
pub mod codec;
pub mod error;
pub mod inference;
pub mod model;
pub mod pipeline;
pub mod service;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
