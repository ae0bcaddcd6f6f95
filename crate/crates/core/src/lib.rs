//! Boundary detection over a toy compressed-video format.

pub mod accumulate;
pub mod codec;
mod error;
pub mod head;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tensor;

pub use error::{Error, ErrorClass, Result};
