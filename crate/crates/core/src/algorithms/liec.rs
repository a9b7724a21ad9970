//! LIEC-SGD: bidirectional compression with local immediate error
//! compensation.
//!
//! On an ordinary round worker `i` sends `p_t^i = C(g_t^i)` and keeps the
//! local error `g_t^i − p_t^i` for the rest of the round only. The server
//! forms `v_t = e_t + (1/N) Σ p_t^i`, broadcasts `p_t = C(v_t)` and keeps
//! `e_{t+1} = v_t − p_t`. Each worker then applies
//! `x_{t+1}^i = x_t^i − η (p_t + (g_t^i − p_t^i))`.
//!
//! Every `H`-th round (`(t+1) mod H = 0`) gradients and models travel
//! uncompressed, the server returns `p_t = v_t` together with the model
//! average, the global error is cleared and all workers restart from the
//! same averaged model.

use crate::compressors::{CompressedPayload, CompressorSpec};
use crate::error::{Error, Result};
use crate::harness::fabric::Direction;
use crate::numerics::{axpy, mean_reduce, sq_norm, ModelVector};

use super::{Algorithm, DistributedOptimizer, RoundEnv, StepReport, WorkerState};

/// Server-side state of LIEC.
#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    /// Global error `e_t`; starts at zero.
    pub error: ModelVector,
    /// Index of the next round.
    pub t: usize,
    /// Averaging period `H`.
    pub period: usize,
}

impl ServerState {
    pub fn is_sync_round(&self, t: usize) -> bool {
        (t + 1) % self.period == 0
    }
}

#[derive(Debug)]
pub struct Liec {
    workers: Vec<WorkerState>,
    server: ServerState,
    worker_compressor: CompressorSpec,
    server_compressor: CompressorSpec,
}

struct Uplink {
    gradient: ModelVector,
    /// `p_t^i` as the server received it.
    sent: ModelVector,
    /// `x_t^i` as the server received it (sync rounds only).
    model: Option<ModelVector>,
}

impl Liec {
    pub fn new(
        workers: usize,
        x0: &ModelVector,
        worker_compressor: CompressorSpec,
        server_compressor: CompressorSpec,
        period: usize,
    ) -> Result<Self> {
        if period == 0 {
            return Err(Error::invalid("period", "averaging period must be at least 1"));
        }
        Ok(Self {
            workers: vec![WorkerState::new(x0.clone()); workers],
            server: ServerState {
                error: ModelVector::zeros(x0.dim()),
                t: 0,
                period,
            },
            worker_compressor,
            server_compressor,
        })
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }
}

impl DistributedOptimizer for Liec {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Liec
    }

    fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    fn server_error(&self) -> Option<&ModelVector> {
        Some(&self.server.error)
    }

    fn error_vector(&self) -> Result<ModelVector> {
        Ok(self.server.error.clone())
    }

    fn error_sq(&self) -> Result<f64> {
        Ok(sq_norm(&self.server.error))
    }

    fn step(&mut self, env: &RoundEnv<'_>) -> Result<StepReport> {
        if env.t != self.server.t {
            return Err(Error::invalid(
                "t",
                format!("round {} requested, server is at {}", env.t, self.server.t),
            ));
        }
        let n = self.workers.len();
        let dim = self.server.error.dim();
        let sync = self.server.is_sync_round(env.t);
        let compressor = self.worker_compressor;
        let workers = &self.workers;

        let uplinks = env.per_worker(n, |i| {
            let x = &workers[i].model;
            let gradient = env.gradient(i, x)?;
            if sync {
                let sent = env.fabric.channel_send(
                    Direction::Uplink,
                    &CompressedPayload::Dense {
                        values: gradient.as_slice().to_vec(),
                    },
                )?;
                let model = env.fabric.channel_send(
                    Direction::ModelAverage,
                    &CompressedPayload::Dense {
                        values: x.as_slice().to_vec(),
                    },
                )?;
                Ok(Uplink {
                    gradient,
                    sent,
                    model: Some(model),
                })
            } else {
                let payload = compressor.compress(&gradient, &mut env.worker_rng(i))?;
                let sent = env.fabric.channel_send(Direction::Uplink, &payload)?;
                Ok(Uplink {
                    gradient,
                    sent,
                    model: None,
                })
            }
        })?;

        // Server: v_t = e_t + (1/N) Σ p_t^i
        let v = self.server.error.add(&mean_reduce(uplinks.iter().map(|u| &u.sent))?)?;
        let (broadcast, average) = if sync {
            let p = env.fabric.broadcast(
                Direction::Downlink,
                &CompressedPayload::Dense {
                    values: v.as_slice().to_vec(),
                },
                n,
            )?;
            let avg = mean_reduce(uplinks.iter().map(|u| u.model.as_ref().expect("sync uplink carries a model")))?;
            let avg = env.fabric.broadcast(
                Direction::ModelAverage,
                &CompressedPayload::Dense {
                    values: avg.into_inner(),
                },
                n,
            )?;
            self.server.error = ModelVector::zeros(dim);
            (p, Some(avg))
        } else {
            let payload = self.server_compressor.compress(&v, &mut env.server_rng())?;
            let p = env.fabric.broadcast(Direction::Downlink, &payload, n)?;
            self.server.error = v.sub(&p)?;
            (p, None)
        };

        // Workers: x_{t+1}^i = x_t^i − η (p_t + (g_t^i − p_t^i)). On sync
        // rounds p_t^i is the full gradient, so the local error vanishes and
        // every worker applies the same step to the same averaged model.
        let eta = env.eta;
        let updated = match &average {
            Some(avg) => vec![axpy(-eta, &broadcast, avg)?; n],
            None => env.per_worker(n, |i| {
                let u = &uplinks[i];
                let local_error = u.gradient.sub(&u.sent)?;
                axpy(-eta, &broadcast.add(&local_error)?, &workers[i].model)
            })?,
        };
        for (w, x) in self.workers.iter_mut().zip(updated) {
            w.model = x;
        }
        self.server.t += 1;

        let grads: Vec<ModelVector> = uplinks.into_iter().map(|u| u.gradient).collect();
        StepReport::from_grads(&grads, sync)
    }
}
