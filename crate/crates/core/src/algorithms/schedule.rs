//! Learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step size that balances the three error terms of the convergence bound:
/// `η = 1 / (√(T/N) + L + T^{1/3} / δ^{2/3})`.
pub fn tuned_step_size(iterations: u64, workers: usize, smoothness: f64, delta: f64) -> Result<f64> {
    if iterations == 0 {
        return Err(Error::invalid("iterations", "must be positive"));
    }
    if workers == 0 {
        return Err(Error::invalid("workers", "must be positive"));
    }
    if !(smoothness.is_finite() && smoothness > 0.0) {
        return Err(Error::invalid("smoothness", format!("must be positive and finite, got {smoothness}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta", format!("must lie in (0, 1], got {delta}")));
    }
    let t = iterations as f64;
    let denom = (t / workers as f64).sqrt() + smoothness + t.cbrt() / delta.powf(2.0 / 3.0);
    Ok(1.0 / denom)
}

/// Smallest iteration count from which [`tuned_step_size`] is guaranteed to
/// satisfy the stability gate `η < δ / (10 L)`: since
/// `1/η > T^{1/3} / δ^{2/3}`, the gate holds once `T ≥ 1000 L³ / δ`.
pub fn stability_threshold(smoothness: f64, delta: f64) -> f64 {
    1000.0 * smoothness.powi(3) / delta
}

/// The stability gate itself.
pub fn satisfies_stability_gate(eta: f64, smoothness: f64, delta: f64) -> bool {
    eta < delta / (10.0 * smoothness)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleSpec {
    Constant { eta: f64 },
    /// [`tuned_step_size`] evaluated with the run's `T`, `N`, `L` and `δ`.
    Tuned,
}

impl ScheduleSpec {
    pub fn resolve(&self, iterations: u64, workers: usize, smoothness: f64, delta: f64) -> Result<f64> {
        let eta = match *self {
            ScheduleSpec::Constant { eta } => eta,
            ScheduleSpec::Tuned => tuned_step_size(iterations, workers, smoothness, delta)?,
        };
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::invalid("eta", format!("learning rate must be positive, got {eta}")));
        }
        Ok(eta)
    }
}
