//! Acoustic scene classification toolkit.

pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod layers;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod topology;
pub mod train;

pub use error::{Error, Result};
