//! Runtime checks of the quantities the convergence analysis bounds.
//!
//! Each monitor is fed once per round, after the optimizer has stepped, and
//! keeps the worst case it has seen so far.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{axpy, ModelVector};

use super::{DistributedOptimizer, StepReport};

/// Largest tolerated `‖x̄_t − x̂_t − η e_t‖_∞ / max(1, ‖x̄_t‖_∞)`.
pub const VIRTUAL_TOLERANCE: f64 = 1e-10;

/// What the driver hands to observers after each round.
pub struct RoundOutcome<'a> {
    /// Index of the round just taken.
    pub t: usize,
    pub eta: f64,
    pub report: &'a StepReport,
    pub optimizer: &'a dyn DistributedOptimizer,
}

/// Hook called by the run driver after every round.
pub trait RoundObserver {
    fn observe(&mut self, round: &RoundOutcome<'_>) -> Result<()>;
}

impl RoundObserver for () {
    fn observe(&mut self, _: &RoundOutcome<'_>) -> Result<()> {
        Ok(())
    }
}

impl<A: RoundObserver, B: RoundObserver> RoundObserver for (A, B) {
    fn observe(&mut self, round: &RoundOutcome<'_>) -> Result<()> {
        self.0.observe(round)?;
        self.1.observe(round)
    }
}

/// The uncompressed trajectory `x̂_{t+1} = x̂_t − η (1/N) Σ_i g_t^i`, driven
/// by the same stochastic gradients as the real run. For LIEC the averaged
/// model stays exactly `η e_t` away from it.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualSequence {
    xhat: ModelVector,
}

impl VirtualSequence {
    pub fn new(x0: &ModelVector) -> Self {
        Self { xhat: x0.clone() }
    }

    pub fn advance(&mut self, mean_grad: &ModelVector, eta: f64) -> Result<()> {
        self.xhat = axpy(-eta, mean_grad, &self.xhat)?;
        Ok(())
    }

    pub fn current(&self) -> &ModelVector {
        &self.xhat
    }
}

/// `‖x̄_t − x̂_t − η e_t‖_∞`.
pub fn virtual_check(vs: &VirtualSequence, xbar: &ModelVector, error: &ModelVector, eta: f64) -> Result<f64> {
    let gap = xbar.sub(&vs.xhat)?;
    Ok(axpy(-eta, error, &gap)?.inf_norm())
}

/// Upper bound on `‖e_t‖²` for LIEC given a gradient-norm bound `m`:
/// `4(1−δ)(2(2−δ) + δ²(N−1)) m² / (δ² N)`.
pub fn error_sq_bound(delta: f64, workers: usize, m: f64) -> f64 {
    let n = workers as f64;
    4.0 * (1.0 - delta) * (2.0 * (2.0 - delta) + delta * delta * (n - 1.0)) * m * m / (delta * delta * n)
}

/// Upper bound on the model disagreement `(1/N) Σ ‖x̄_t − x_t^i‖²`:
/// `(1−δ)(1−δ+δ²) η² m² / δ²`.
pub fn disagreement_sq_bound(delta: f64, eta: f64, m: f64) -> f64 {
    (1.0 - delta) * (1.0 - delta + delta * delta) * eta * eta * m * m / (delta * delta)
}

/// Worst case of an `observed ≤ bound` check over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundTally {
    pub checks: u64,
    pub violations: u64,
    /// Largest observed value.
    pub max_observed: f64,
    /// Bound at the round where `observed / bound` peaked.
    pub bound_at_worst: f64,
    /// Largest `observed / bound`.
    pub worst_ratio: f64,
}

impl BoundTally {
    pub fn record(&mut self, observed: f64, bound: f64) {
        self.checks += 1;
        if !(observed <= bound) {
            self.violations += 1;
        }
        self.max_observed = self.max_observed.max(observed);
        let ratio = if bound > 0.0 {
            observed / bound
        } else if observed > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if ratio > self.worst_ratio || self.checks == 1 {
            self.worst_ratio = ratio;
            self.bound_at_worst = bound;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Tracks `M̂`, the running maximum of observed stochastic-gradient norms,
/// and checks the error and disagreement bounds against it.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundMonitor {
    pub delta: f64,
    pub workers: usize,
    pub eta: f64,
    pub max_grad_norm: f64,
    pub error: BoundTally,
    pub disagreement: BoundTally,
}

impl BoundMonitor {
    pub fn new(delta: f64, workers: usize, eta: f64) -> Self {
        Self {
            delta,
            workers,
            eta,
            max_grad_norm: 0.0,
            error: BoundTally::default(),
            disagreement: BoundTally::default(),
        }
    }

    /// Feeds the gradients of the round just taken and the resulting state.
    pub fn record(&mut self, round_max_grad_norm: f64, opt: &dyn DistributedOptimizer) -> Result<()> {
        self.max_grad_norm = self.max_grad_norm.max(round_max_grad_norm);
        let m = self.max_grad_norm;
        self.error
            .record(opt.error_sq()?, error_sq_bound(self.delta, self.workers, m));
        self.disagreement
            .record(opt.disagreement()?, disagreement_sq_bound(self.delta, self.eta, m));
        Ok(())
    }
}

impl RoundObserver for BoundMonitor {
    fn observe(&mut self, round: &RoundOutcome<'_>) -> Result<()> {
        self.record(round.report.max_grad_norm, round.optimizer)
    }
}

/// After a synchronization round the global error must be exactly zero and
/// every worker must hold the same model, bit for bit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncMonitor {
    pub sync_rounds: u64,
    pub violations: u64,
    /// Largest `max(‖e‖, max_i ‖x^i − x^1‖)` seen after a sync round.
    pub max_residual: f64,
}

impl SyncMonitor {
    pub fn observe(&mut self, opt: &dyn DistributedOptimizer) -> Result<()> {
        self.sync_rounds += 1;
        let err = opt.server_error().map_or(0.0, ModelVector::norm);
        let ws = opt.workers();
        let first = &ws[0].model;
        let mut spread: f64 = 0.0;
        let mut identical = true;
        for w in &ws[1..] {
            identical &= w.model.bitwise_eq(first);
            spread = spread.max(w.model.sub(first)?.norm());
        }
        let residual = err.max(spread);
        if residual != 0.0 || !identical {
            self.violations += 1;
        }
        self.max_residual = self.max_residual.max(residual);
        Ok(())
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Virtual-sequence, bound and sync checks bundled for one run.
#[derive(Clone, Debug)]
pub struct InvariantMonitor {
    virtual_seq: VirtualSequence,
    /// Worst scaled deviation from the virtual-sequence identity.
    pub virtual_worst: f64,
    pub virtual_violations: u64,
    pub bounds: BoundMonitor,
    pub sync: SyncMonitor,
}

impl InvariantMonitor {
    /// `delta` is the contraction parameter the bound checks assume.
    pub fn new(x0: &ModelVector, delta: f64, workers: usize, eta: f64) -> Self {
        Self {
            virtual_seq: VirtualSequence::new(x0),
            virtual_worst: 0.0,
            virtual_violations: 0,
            bounds: BoundMonitor::new(delta, workers, eta),
            sync: SyncMonitor::default(),
        }
    }

    pub fn virtual_passed(&self) -> bool {
        self.virtual_violations == 0
    }
}

impl RoundObserver for InvariantMonitor {
    fn observe(&mut self, round: &RoundOutcome<'_>) -> Result<()> {
        let opt = round.optimizer;
        self.virtual_seq.advance(&round.report.mean_grad, round.eta)?;
        let xbar = opt.average_model()?;
        let deviation = virtual_check(&self.virtual_seq, &xbar, &opt.error_vector()?, round.eta)?;
        let scaled = deviation / xbar.inf_norm().max(1.0);
        if !(scaled <= VIRTUAL_TOLERANCE) {
            self.virtual_violations += 1;
        }
        self.virtual_worst = self.virtual_worst.max(scaled);
        self.bounds.record(round.report.max_grad_norm, opt)?;
        if round.report.synced {
            self.sync.observe(opt)?;
        }
        Ok(())
    }
}
