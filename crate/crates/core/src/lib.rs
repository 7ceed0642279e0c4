//! Compressed sensing and compressed learning for simulated tactile arrays.
//!
//! The crate simulates taxel arrays pressed onto union-of-spheres objects,
//! compresses the resulting frames with a scrambled block Hadamard ensemble,
//! recovers full frames by sparse recovery in a Daubechies-2 wavelet basis, and
//! trains DAG multi-class linear SVMs directly on the compressed measurements.

pub mod compression;
pub mod error;
pub mod harness;
pub mod io;
pub mod learn;
pub mod recovery;
pub mod seed;
pub mod simulator;

pub use error::{Error, Result};
