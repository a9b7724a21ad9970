//! Distributed optimization loops over the simulated fabric.
//!
//! Every optimizer advances one synchronous round per [`DistributedOptimizer::step`]:
//! workers draw stochastic gradients and send uplink frames, the server
//! reduces them in worker order and broadcasts a downlink frame, and the
//! workers update their models.

mod baselines;
mod liec;
pub mod monitors;
pub mod schedule;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baselines::{DoubleSqueeze, MemSgd, ParallelSgd};
pub use liec::{Liec, ServerState};
pub use monitors::{
    error_sq_bound, disagreement_sq_bound, virtual_check, BoundMonitor, BoundTally, InvariantMonitor, RoundObserver,
    RoundOutcome, SyncMonitor, VirtualSequence,
};
pub use schedule::{tuned_step_size, satisfies_stability_gate, stability_threshold, ScheduleSpec};

use crate::compressors::CompressorSpec;
use crate::error::{Error, Result};
use crate::harness::fabric::Fabric;
use crate::numerics::{mean_reduce, sq_dist, sq_norm, ModelVector, Purpose, RngStream};
use crate::problems::ProblemInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "liec")]
    Liec,
    #[serde(rename = "psgd")]
    Psgd,
    #[serde(rename = "mem-sgd")]
    MemSgd,
    #[serde(rename = "double-squeeze")]
    DoubleSqueeze,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Liec,
        Algorithm::Psgd,
        Algorithm::MemSgd,
        Algorithm::DoubleSqueeze,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Liec => "liec",
            Algorithm::Psgd => "psgd",
            Algorithm::MemSgd => "mem-sgd",
            Algorithm::DoubleSqueeze => "double-squeeze",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "algorithm",
                    format!("`{s}` is not one of liec, psgd, mem-sgd, double-squeeze"),
                )
            })
    }
}

/// Per-worker state. `residual` is the error-feedback memory `e_t^i` used by
/// MEM-SGD and DoubleSqueeze; it stays zero for LIEC and P-SGD.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkerState {
    pub model: ModelVector,
    pub residual: ModelVector,
}

impl WorkerState {
    pub fn new(model: ModelVector) -> Self {
        let dim = model.dim();
        Self {
            model,
            residual: ModelVector::zeros(dim),
        }
    }
}

/// Everything a round needs besides the optimizer's own state.
pub struct RoundEnv<'a> {
    pub problem: &'a ProblemInstance,
    pub fabric: &'a Fabric,
    pub t: usize,
    pub eta: f64,
    pub seed: u64,
    /// Runs the per-worker phase on a thread pool when present.
    pub pool: Option<&'a rayon::ThreadPool>,
}

impl RoundEnv<'_> {
    pub(crate) fn worker_rng(&self, worker: usize) -> rand_chacha::ChaCha12Rng {
        RngStream::new(self.seed, worker as u32, Purpose::Compressor).at(self.t as u64)
    }

    pub(crate) fn server_rng(&self) -> rand_chacha::ChaCha12Rng {
        RngStream::server(self.seed, Purpose::Compressor).at(self.t as u64)
    }

    pub(crate) fn gradient(&self, worker: usize, x: &ModelVector) -> Result<ModelVector> {
        Ok(self
            .problem
            .stoch_grad(worker, x, self.t as u64, self.seed)?
            .gradient)
    }

    /// Runs `f` for every worker and returns the results in worker order.
    pub(crate) fn per_worker<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match self.pool {
            Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            None => (0..n).map(f).collect(),
        }
    }
}

/// What a round observed, for monitors that track the run.
#[derive(Clone, Debug)]
pub struct StepReport {
    /// `(1/N) Σ_i ∇f_i(x_t^i, ξ_t^i)`.
    pub mean_grad: ModelVector,
    /// `max_i ‖∇f_i(x_t^i, ξ_t^i)‖`.
    pub max_grad_norm: f64,
    /// Whether this round exchanged full gradients and averaged the models.
    pub synced: bool,
}

impl StepReport {
    pub(crate) fn from_grads(grads: &[ModelVector], synced: bool) -> Result<Self> {
        Ok(Self {
            mean_grad: mean_reduce(grads)?,
            max_grad_norm: grads.iter().map(ModelVector::norm).fold(0.0, f64::max),
            synced,
        })
    }
}

pub trait DistributedOptimizer: Send {
    fn algorithm(&self) -> Algorithm;

    fn step(&mut self, env: &RoundEnv<'_>) -> Result<StepReport>;

    fn workers(&self) -> &[WorkerState];

    /// `x̄_t = (1/N) Σ_i x_t^i`.
    fn average_model(&self) -> Result<ModelVector> {
        mean_reduce(self.workers().iter().map(|w| &w.model))
    }

    /// The error variable the algorithm carries: `e_t` for LIEC,
    /// `(1/N) Σ e_t^i` for MEM-SGD, `(1/N) Σ e_t^i + e_t` for DoubleSqueeze
    /// and zero for P-SGD. In every case `x̄_t = x̂_t + η · error_vector()`
    /// where `x̂_t` is the uncompressed virtual trajectory.
    fn error_vector(&self) -> Result<ModelVector>;

    /// `‖error_vector()‖²`.
    fn error_sq(&self) -> Result<f64> {
        Ok(sq_norm(&self.error_vector()?))
    }

    /// `(1/N) Σ_i ‖x̄_t − x_t^i‖²`.
    fn disagreement(&self) -> Result<f64> {
        let mean = self.average_model()?;
        let ws = self.workers();
        let mut total = 0.0;
        for w in ws {
            total += sq_dist(&mean, &w.model)?;
        }
        Ok(total / ws.len() as f64)
    }

    /// Server-side error `e_t`, for algorithms that keep one.
    fn server_error(&self) -> Option<&ModelVector> {
        None
    }
}

/// Builds an optimizer with every worker starting from `x0`.
pub fn build_optimizer(
    algorithm: Algorithm,
    workers: usize,
    x0: &ModelVector,
    worker_compressor: CompressorSpec,
    server_compressor: CompressorSpec,
    period: usize,
) -> Result<Box<dyn DistributedOptimizer>> {
    if workers == 0 {
        return Err(Error::invalid("workers", "must be at least 1"));
    }
    worker_compressor.validate(x0.dim())?;
    server_compressor.validate(x0.dim())?;
    Ok(match algorithm {
        Algorithm::Liec => Box::new(Liec::new(
            workers,
            x0,
            worker_compressor,
            server_compressor,
            period,
        )?),
        Algorithm::Psgd => Box::new(ParallelSgd::new(workers, x0)),
        Algorithm::MemSgd => Box::new(MemSgd::new(workers, x0, worker_compressor)),
        Algorithm::DoubleSqueeze => Box::new(DoubleSqueeze::new(
            workers,
            x0,
            worker_compressor,
            server_compressor,
        )),
    })
}
