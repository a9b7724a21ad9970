//! Runs an optimizer for a fixed number of rounds and records one
//! [`IterationRecord`] per round.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::fabric::{Fabric, Fidelity, RoundBytes};
use super::metrics::IterationRecord;
use crate::algorithms::{build_optimizer, Algorithm, DistributedOptimizer, RoundEnv, RoundObserver, RoundOutcome};
use crate::compressors::CompressorSpec;
use crate::error::{Error, Result};
use crate::numerics::{sq_norm, ModelVector};
use crate::problems::ProblemInstance;

/// A run is abandoned once `‖x̄_t‖` exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub worker_compressor: CompressorSpec,
    pub server_compressor: CompressorSpec,
    /// Averaging period `H` (LIEC only).
    pub period: usize,
    pub eta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub fidelity: Fidelity,
    /// Worker threads per round; 0 or 1 runs workers sequentially.
    pub threads: usize,
    /// Fill `round_ms` with wall-clock time. Off by default so that
    /// repeated runs produce byte-identical CSVs.
    pub record_timing: bool,
}

impl RunSpec {
    /// Uncompressed defaults; adjust fields as needed.
    pub fn new(algorithm: Algorithm, eta: f64, iterations: usize, seed: u64) -> Self {
        Self {
            algorithm,
            worker_compressor: CompressorSpec::Identity,
            server_compressor: CompressorSpec::Identity,
            period: 1,
            eta,
            iterations,
            seed,
            fidelity: Fidelity::Lossless,
            threads: 1,
            record_timing: false,
        }
    }

    /// Same compressor on both sides.
    pub fn with_compressor(mut self, spec: CompressorSpec) -> Self {
        self.worker_compressor = spec;
        self.server_compressor = spec;
        self
    }

    pub fn with_period(mut self, period: usize) -> Self {
        self.period = period;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub t: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    /// Rows `0..=T`, or up to the divergent round.
    pub records: Vec<IterationRecord>,
    pub diverged: Option<Divergence>,
    /// `x̄` after the last completed round.
    pub final_model: ModelVector,
    pub totals: RoundBytes,
}

/// Runs `spec` on `problem` without extra observers.
pub fn simulate(problem: &ProblemInstance, spec: &RunSpec) -> Result<RunResult> {
    simulate_observed(problem, spec, &mut ())
}

/// Runs `spec` on `problem`, calling `observer` after every round.
///
/// Non-finite iterates or `‖x̄_t‖ > DIVERGENCE_NORM` end the run early with
/// [`RunResult::diverged`] set; other errors propagate.
pub fn simulate_observed(
    problem: &ProblemInstance,
    spec: &RunSpec,
    observer: &mut dyn RoundObserver,
) -> Result<RunResult> {
    if !(spec.eta.is_finite() && spec.eta > 0.0) {
        return Err(Error::invalid("eta", format!("must be positive, got {}", spec.eta)));
    }
    let x0 = problem.initial_point();
    let mut opt = build_optimizer(
        spec.algorithm,
        problem.workers(),
        &x0,
        spec.worker_compressor,
        spec.server_compressor,
        spec.period,
    )?;
    let pool = if spec.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(spec.threads)
                .build()
                .map_err(|e| Error::invalid("threads", e.to_string()))?,
        )
    } else {
        None
    };
    let fabric = Fabric::new(spec.fidelity);
    let mut records = Vec::with_capacity(spec.iterations + 1);
    let mut xbar = x0;

    for t in 0..spec.iterations {
        let mut row = snapshot(problem, opt.as_ref(), &xbar, t)?;
        if let Some(reason) = divergence(&xbar) {
            records.push(row);
            return Ok(diverged(records, t, reason, xbar, &fabric));
        }
        let env = RoundEnv {
            problem,
            fabric: &fabric,
            t,
            eta: spec.eta,
            seed: spec.seed,
            pool: pool.as_ref(),
        };
        let started = Instant::now();
        let report = match opt.step(&env) {
            Ok(r) => r,
            Err(Error::NonFinite { context }) => {
                records.push(row);
                let reason = format!("non-finite value in {context}");
                return Ok(diverged(records, t, reason, xbar, &fabric));
            }
            Err(e) => return Err(e),
        };
        let elapsed = started.elapsed();
        let bytes = fabric.end_round();
        row.uplink_bytes = bytes.uplink;
        row.downlink_bytes = bytes.downlink;
        row.avg_bytes = bytes.model_average;
        if spec.record_timing {
            row.round_ms = elapsed.as_secs_f64() * 1e3;
        }
        records.push(row);
        observer.observe(&RoundOutcome {
            t,
            eta: spec.eta,
            report: &report,
            optimizer: opt.as_ref(),
        })?;
        xbar = opt.average_model()?;
    }

    let t = spec.iterations;
    records.push(snapshot(problem, opt.as_ref(), &xbar, t)?);
    if let Some(reason) = divergence(&xbar) {
        return Ok(diverged(records, t, reason, xbar, &fabric));
    }
    Ok(RunResult {
        records,
        diverged: None,
        final_model: xbar,
        totals: fabric.totals(),
    })
}

fn diverged(
    records: Vec<IterationRecord>,
    t: usize,
    reason: String,
    final_model: ModelVector,
    fabric: &Fabric,
) -> RunResult {
    fabric.end_round();
    RunResult {
        records,
        diverged: Some(Divergence { t, reason }),
        final_model,
        totals: fabric.totals(),
    }
}

fn divergence(xbar: &ModelVector) -> Option<String> {
    let norm = xbar.norm();
    if !norm.is_finite() {
        Some("average model is not finite".to_string())
    } else if norm > DIVERGENCE_NORM {
        Some(format!("‖x̄‖ = {norm:.3e} exceeds {DIVERGENCE_NORM:.0e}"))
    } else {
        None
    }
}

/// State columns of the row for round `t`; byte columns are zero.
fn snapshot(
    problem: &ProblemInstance,
    opt: &dyn DistributedOptimizer,
    xbar: &ModelVector,
    t: usize,
) -> Result<IterationRecord> {
    Ok(IterationRecord {
        t,
        loss: problem.loss(xbar)?,
        grad_sq: sq_norm(&problem.full_grad(xbar)?),
        err_sq: opt.error_sq()?,
        disagreement: opt.disagreement()?,
        uplink_bytes: 0,
        downlink_bytes: 0,
        avg_bytes: 0,
        round_ms: 0.0,
    })
}
