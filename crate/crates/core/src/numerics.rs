//! Dense vector arithmetic and seeded random streams.
//!
//! Every reduction sums in ascending worker order so that repeated runs are
//! bitwise reproducible regardless of how the per-worker work was scheduled.

use std::ops::Index;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense parameter, gradient or error vector of fixed dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "ModelVector::new",
            });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Largest absolute coordinate.
    pub fn inf_norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn norm(&self) -> f64 {
        sq_norm(self).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    /// `self - other`.
    pub fn sub(&self, other: &ModelVector) -> Result<ModelVector> {
        axpy(-1.0, other, self)
    }

    /// `self + other`.
    pub fn add(&self, other: &ModelVector) -> Result<ModelVector> {
        axpy(1.0, other, self)
    }

    pub fn scale(&self, alpha: f64) -> Result<ModelVector> {
        checked(self.0.iter().map(|v| alpha * v).collect(), "scale")
    }

    /// Bitwise equality, distinguishing signed zeros.
    pub fn bitwise_eq(&self, other: &ModelVector) -> bool {
        self.dim() == other.dim()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Index<usize> for ModelVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl TryFrom<Vec<f64>> for ModelVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

fn checked(values: Vec<f64>, context: &'static str) -> Result<ModelVector> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context });
    }
    Ok(ModelVector(values))
}

fn same_dim(x: &ModelVector, y: &ModelVector) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(())
}

/// Returns `alpha * x + y`.
pub fn axpy(alpha: f64, x: &ModelVector, y: &ModelVector) -> Result<ModelVector> {
    same_dim(x, y)?;
    let out = x.0.iter().zip(&y.0).map(|(a, b)| alpha * a + b).collect();
    checked(out, "axpy")
}

/// Elementwise mean, accumulated in list order.
///
/// Uses the running-mean recurrence `m += (v - m) / k`, so a list of
/// identical vectors reduces to that vector exactly.
pub fn mean_reduce<'a, I>(vectors: I) -> Result<ModelVector>
where
    I: IntoIterator<Item = &'a ModelVector>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::EmptyReduction)?;
    let mut mean = first.0.clone();
    for (idx, v) in iter.enumerate() {
        same_dim(first, v)?;
        let k = (idx + 2) as f64;
        for (m, x) in mean.iter_mut().zip(&v.0) {
            *m += (x - *m) / k;
        }
    }
    checked(mean, "mean_reduce")
}

/// Squared Euclidean norm, accumulated with compensated (dot2) summation.
pub fn sq_norm(x: &ModelVector) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for &v in &x.0 {
        let prod = v * v;
        let prod_err = v.mul_add(v, -prod);
        let t = sum + prod;
        let bv = t - sum;
        let sum_err = (sum - (t - bv)) + (prod - bv);
        sum = t;
        comp += sum_err + prod_err;
    }
    sum + comp
}

/// Squared Euclidean distance between two vectors of equal dimension.
pub fn sq_dist(x: &ModelVector, y: &ModelVector) -> Result<f64> {
    same_dim(x, y)?;
    Ok(x.0.iter().zip(&y.0).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// What a random stream is used for. Separate purposes never share draws, so
/// swapping the compressor does not perturb data sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Data = 0,
    Noise = 1,
    Compressor = 2,
    Init = 3,
}

/// A reproducible random stream keyed by `(seed, worker, purpose)`.
///
/// Each iteration `t` gets its own disjoint window of the underlying ChaCha
/// keystream, so a draw at iteration `t` does not depend on how many words
/// earlier iterations consumed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    worker: u32,
    purpose: Purpose,
}

impl RngStream {
    /// Worker slot reserved for the parameter server.
    pub const SERVER: u32 = u32::MAX;

    const WINDOW_BITS: u32 = 40;

    pub fn new(seed: u64, worker: u32, purpose: Purpose) -> Self {
        Self {
            seed,
            worker,
            purpose,
        }
    }

    pub fn server(seed: u64, purpose: Purpose) -> Self {
        Self::new(seed, Self::SERVER, purpose)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn worker(&self) -> u32 {
        self.worker
    }

    pub fn purpose(&self) -> Purpose {
        self.purpose
    }

    /// Generator positioned at the start of iteration `t`'s window.
    pub fn at(&self, t: u64) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.worker as u64) << 8) | self.purpose as u64);
        rng.set_word_pos((t as u128) << Self::WINDOW_BITS);
        rng
    }

    /// Generator for one-off use outside an iteration loop.
    pub fn rng(&self) -> ChaCha12Rng {
        self.at(0)
    }
}
