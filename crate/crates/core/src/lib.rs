//! Coherent-noise memory experiments, detector-error-model estimation and
//! matching decoding.

pub mod analysis;
pub mod circuit;
pub mod codes;
pub mod decode;
pub mod dem;
pub mod error;
pub mod estimate;
pub mod sampler;
pub mod selftest;
pub mod statevec;

pub use error::{Error, Result};

/// Artifact version written next to every output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
