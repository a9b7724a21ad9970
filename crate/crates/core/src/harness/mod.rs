//! The simulated fabric: wire codec, byte-accounted channel, run driver and
//! metrics output.

pub mod codec;
pub mod driver;
pub mod fabric;
pub mod metrics;

pub use driver::{simulate, simulate_observed, Divergence, RunResult, RunSpec, DIVERGENCE_NORM};
pub use fabric::{Direction, Fabric, Fidelity, RoundBytes};
pub use metrics::{metrics_flush, IterationRecord, MetricsSummary};
