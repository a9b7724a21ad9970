//! Simulator for communication-compressed distributed SGD.
//!
//! A [`problems::ProblemInstance`] supplies per-worker stochastic gradients,
//! an optimizer from [`algorithms`] runs synchronous rounds over the
//! byte-accounted [`harness::fabric::Fabric`], and [`harness::driver`]
//! records one CSV row per round. [`experiment`] wires these together from
//! TOML configs.

pub mod algorithms;
pub mod compressors;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod numerics;
pub mod problems;

pub use algorithms::{Algorithm, DistributedOptimizer};
pub use compressors::{CompressedPayload, CompressorSpec};
pub use error::{Error, Result};
pub use harness::{simulate, Fidelity, RunResult, RunSpec};
pub use numerics::ModelVector;
pub use problems::ProblemInstance;
