//! Synthetic objectives `f(x) = (1/N) Σ_i f_i(x)` split across `N` workers.
//!
//! Two families are provided. Quadratics have an exactly known noise level
//! and a closed-form minimizer; regularized logistic regression gives a
//! smooth non-quadratic case with genuine minibatch sampling.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{mean_reduce, ModelVector, Purpose, RngStream};

/// Rank of the low-rank part of each quadratic's Hessian.
const QUADRATIC_RANK: usize = 2;
/// ℓ2 penalty of the logistic objective.
pub const LOGISTIC_L2: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Quadratic,
    Logistic,
}

/// How the per-worker objectives relate to one another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heterogeneity {
    /// Every worker holds the same objective.
    Identical,
    /// Workers hold different objectives.
    Heterogeneous,
    /// Disjoint shards drawn i.i.d. from one distribution.
    IidShards,
}

#[derive(Clone, Debug)]
struct QuadraticShard {
    diag: Vec<f64>,
    /// `QUADRATIC_RANK` column vectors of length `d`.
    factors: Vec<Vec<f64>>,
    center: Vec<f64>,
}

impl QuadraticShard {
    /// `A (x - c)` with `A = diag + U Uᵀ`.
    fn hessian_times(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.diag.iter().zip(x).map(|(a, v)| a * v).collect();
        for u in &self.factors {
            let dot: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
            for (o, a) in out.iter_mut().zip(u) {
                *o += dot * a;
            }
        }
        out
    }

    fn shifted(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, c)| a - c).collect()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.hessian_times(&self.shifted(x))
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r = self.shifted(x);
        0.5 * r.iter().zip(self.hessian_times(&r)).map(|(a, b)| a * b).sum::<f64>()
    }

    fn dense_hessian(&self) -> DMatrix<f64> {
        let d = self.diag.len();
        let mut a = DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag));
        for u in &self.factors {
            let u = DVector::from_column_slice(u);
            a += &u * u.transpose();
        }
        debug_assert_eq!(a.nrows(), d);
        a
    }
}

#[derive(Clone, Debug)]
struct LogisticData {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    shards: Vec<Range<usize>>,
}

#[derive(Clone, Debug)]
enum Objective {
    Quadratic {
        shards: Vec<QuadraticShard>,
        sigma: f64,
        minimizer: ModelVector,
        mean_hessian: DMatrix<f64>,
    },
    Logistic(LogisticData),
}

/// An immutable, thread-shareable synthetic problem.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    dim: usize,
    workers: usize,
    smoothness: f64,
    heterogeneity: Heterogeneity,
    seed: u64,
    objective: Objective,
}

/// How a stochastic gradient was drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum Draw {
    /// Additive Gaussian noise from the worker's noise stream at iteration `t`.
    Noise { t: u64 },
    /// A single sample from the worker's shard.
    Sample { index: usize },
}

#[derive(Clone, Debug)]
pub struct GradientSample {
    pub worker: usize,
    pub gradient: ModelVector,
    pub draw: Draw,
}

/// Parameters for [`make_quadratic_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticSpec {
    pub dim: usize,
    pub workers: usize,
    pub condition: f64,
    pub sigma: f64,
    pub seed: u64,
    pub homogeneous: bool,
}

/// Heterogeneous quadratic `f_i(x) = ½(x − c_i)ᵀA_i(x − c_i)` with Hessian
/// eigenvalues in `[1, condition]` and gradient noise `N(0, σ²/d · I)`.
pub fn make_quadratic(
    dim: usize,
    workers: usize,
    condition: f64,
    sigma: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    make_quadratic_with(QuadraticSpec {
        dim,
        workers,
        condition,
        sigma,
        seed,
        homogeneous: false,
    })
}

pub fn make_quadratic_with(spec: QuadraticSpec) -> Result<ProblemInstance> {
    let QuadraticSpec {
        dim,
        workers,
        condition,
        sigma,
        seed,
        homogeneous,
    } = spec;
    check_sizes(dim, workers)?;
    if !(condition >= 1.0 && condition.is_finite()) {
        return Err(Error::invalid("condition", format!("{condition} must be >= 1")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("{sigma} must be >= 0")));
    }

    let mut rng = RngStream::new(seed, 0, Purpose::Init).rng();
    let spread = (condition - 1.0) / 2.0;
    let draw_shard = |rng: &mut rand_chacha::ChaCha12Rng| {
        let diag: Vec<f64> = (0..dim).map(|_| 1.0 + spread * rng.random::<f64>()).collect();
        let rank = if spread > 0.0 { QUADRATIC_RANK.min(dim) } else { 0 };
        let mut factors: Vec<Vec<f64>> = (0..rank)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        // Scale so that ‖U‖_F² = spread, keeping λ_max ≤ 1 + 2·spread.
        let frob: f64 = factors.iter().flatten().map(|v| v * v).sum();
        if frob > 0.0 {
            let s = (spread / frob).sqrt();
            factors.iter_mut().flatten().for_each(|v| *v *= s);
        }
        let center = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        QuadraticShard {
            diag,
            factors,
            center,
        }
    };
    let shards: Vec<QuadraticShard> = if homogeneous {
        vec![draw_shard(&mut rng); workers]
    } else {
        (0..workers).map(|_| draw_shard(&mut rng)).collect()
    };

    let smoothness = shards
        .iter()
        .map(|s| {
            let max_diag = s.diag.iter().cloned().fold(0.0, f64::max);
            let frob: f64 = s.factors.iter().flatten().map(|v| v * v).sum();
            max_diag + frob
        })
        .fold(0.0, f64::max);

    // Σ A_i x* = Σ A_i c_i
    let mut hessian_sum = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for s in &shards {
        let a = s.dense_hessian();
        rhs += &a * DVector::from_column_slice(&s.center);
        hessian_sum += a;
    }
    let chol = hessian_sum
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("condition", "Hessian sum is not positive definite"))?;
    let minimizer = ModelVector::new(chol.solve(&rhs).as_slice().to_vec())?;
    let mean_hessian = hessian_sum / workers as f64;

    Ok(ProblemInstance {
        dim,
        workers,
        smoothness,
        heterogeneity: if homogeneous || workers == 1 {
            Heterogeneity::Identical
        } else {
            Heterogeneity::Heterogeneous
        },
        seed,
        objective: Objective::Quadratic {
            shards,
            sigma,
            minimizer,
            mean_hessian,
        },
    })
}

/// ℓ2-regularized logistic regression over `workers · samples_per_worker`
/// synthetic points, split into contiguous disjoint shards.
pub fn make_logistic(
    dim: usize,
    workers: usize,
    samples_per_worker: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    check_sizes(dim, workers)?;
    if samples_per_worker == 0 {
        return Err(Error::invalid("samples_per_worker", "must be at least 1"));
    }
    let mut rng = RngStream::new(seed, 0, Purpose::Init).rng();
    let truth: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let total = workers * samples_per_worker;
    let scale = 1.0 / (dim as f64).sqrt();
    let mut features = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    for _ in 0..total {
        let a: Vec<f64> = (0..dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let margin: f64 = a.iter().zip(&truth).map(|(u, v)| u * v).sum();
        let label = if rng.random::<f64>() < sigmoid(margin) {
            1.0
        } else {
            -1.0
        };
        features.push(a);
        labels.push(label);
    }
    let max_row_sq = features
        .iter()
        .map(|a| a.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let shards = (0..workers)
        .map(|i| i * samples_per_worker..(i + 1) * samples_per_worker)
        .collect();
    Ok(ProblemInstance {
        dim,
        workers,
        smoothness: max_row_sq / 4.0 + LOGISTIC_L2,
        heterogeneity: Heterogeneity::IidShards,
        seed,
        objective: Objective::Logistic(LogisticData {
            features,
            labels,
            shards,
        }),
    })
}

fn check_sizes(dim: usize, workers: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::invalid("dim", "must be at least 1"));
    }
    if workers == 0 {
        return Err(Error::invalid("workers", "must be at least 1"));
    }
    if dim > u32::MAX as usize {
        return Err(Error::invalid("dim", "must fit in 32 bits"));
    }
    Ok(())
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticData {
    fn sample_loss(&self, idx: usize, x: &[f64]) -> f64 {
        let margin: f64 = self.features[idx].iter().zip(x).map(|(a, b)| a * b).sum();
        softplus(-self.labels[idx] * margin)
    }

    /// Gradient of the unregularized loss of one sample, added into `out`
    /// with weight `w`.
    fn add_sample_grad(&self, idx: usize, x: &[f64], w: f64, out: &mut [f64]) {
        let a = &self.features[idx];
        let y = self.labels[idx];
        let margin: f64 = a.iter().zip(x).map(|(u, v)| u * v).sum();
        let coef = -y * sigmoid(-y * margin) * w;
        for (o, v) in out.iter_mut().zip(a) {
            *o += coef * v;
        }
    }
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn kind(&self) -> ProblemKind {
        match self.objective {
            Objective::Quadratic { .. } => ProblemKind::Quadratic,
            Objective::Logistic(_) => ProblemKind::Logistic,
        }
    }

    /// Declared Lipschitz constant of every `∇f_i`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn heterogeneity(&self) -> Heterogeneity {
        self.heterogeneity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Exact gradient-noise level `σ` with `E‖g − ∇f_i‖² = σ²`, when the
    /// noise is synthetic.
    pub fn sigma(&self) -> Option<f64> {
        match &self.objective {
            Objective::Quadratic { sigma, .. } => Some(*sigma),
            Objective::Logistic(_) => None,
        }
    }

    /// Closed-form global minimizer, when one exists.
    pub fn minimizer(&self) -> Option<&ModelVector> {
        match &self.objective {
            Objective::Quadratic { minimizer, .. } => Some(minimizer),
            Objective::Logistic(_) => None,
        }
    }

    /// Sample index ranges owned by each worker (logistic only).
    pub fn shards(&self) -> Option<&[Range<usize>]> {
        match &self.objective {
            Objective::Quadratic { .. } => None,
            Objective::Logistic(data) => Some(&data.shards),
        }
    }

    pub fn dataset_len(&self) -> Option<usize> {
        match &self.objective {
            Objective::Quadratic { .. } => None,
            Objective::Logistic(data) => Some(data.labels.len()),
        }
    }

    /// Starting point shared by every worker.
    pub fn initial_point(&self) -> ModelVector {
        ModelVector::zeros(self.dim)
    }

    fn check(&self, x: &ModelVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.dim(),
            });
        }
        Ok(())
    }

    fn check_worker(&self, worker: usize) -> Result<()> {
        if worker >= self.workers {
            return Err(Error::invalid(
                "worker",
                format!("{worker} out of range for {} workers", self.workers),
            ));
        }
        Ok(())
    }

    /// `f_i(x)`.
    pub fn worker_objective(&self, worker: usize, x: &ModelVector) -> Result<f64> {
        self.check(x)?;
        self.check_worker(worker)?;
        let x = x.as_slice();
        Ok(match &self.objective {
            Objective::Quadratic { shards, .. } => shards[worker].value(x),
            Objective::Logistic(data) => {
                let range = data.shards[worker].clone();
                let n = range.len() as f64;
                let loss: f64 = range.map(|j| data.sample_loss(j, x)).sum::<f64>() / n;
                loss + 0.5 * LOGISTIC_L2 * x.iter().map(|v| v * v).sum::<f64>()
            }
        })
    }

    /// `f(x) = (1/N) Σ_i f_i(x)`.
    pub fn objective(&self, x: &ModelVector) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.workers {
            total += self.worker_objective(i, x)?;
        }
        Ok(total / self.workers as f64)
    }

    /// Reported loss: the suboptimality `f(x) − f*` for quadratics (computed
    /// as `½(x − x*)ᵀH̄(x − x*)`), the raw objective otherwise.
    pub fn loss(&self, x: &ModelVector) -> Result<f64> {
        self.check(x)?;
        match &self.objective {
            Objective::Quadratic {
                minimizer,
                mean_hessian,
                ..
            } => {
                let r = DVector::from_vec(x.sub(minimizer)?.into_inner());
                Ok(0.5 * r.dot(&(mean_hessian * &r)))
            }
            Objective::Logistic(_) => self.objective(x),
        }
    }

    /// Exact `∇f_i(x)`.
    pub fn worker_grad(&self, worker: usize, x: &ModelVector) -> Result<ModelVector> {
        self.check(x)?;
        self.check_worker(worker)?;
        let xs = x.as_slice();
        let g = match &self.objective {
            Objective::Quadratic { shards, .. } => shards[worker].gradient(xs),
            Objective::Logistic(data) => {
                let range = data.shards[worker].clone();
                let w = 1.0 / range.len() as f64;
                let mut out = vec![0.0; self.dim];
                for j in range {
                    data.add_sample_grad(j, xs, w, &mut out);
                }
                for (o, v) in out.iter_mut().zip(xs) {
                    *o += LOGISTIC_L2 * v;
                }
                out
            }
        };
        ModelVector::new(g)
    }

    /// Exact `∇f(x)`, the worker-ordered mean of the `∇f_i(x)`.
    pub fn full_grad(&self, x: &ModelVector) -> Result<ModelVector> {
        let grads = (0..self.workers)
            .map(|i| self.worker_grad(i, x))
            .collect::<Result<Vec<_>>>()?;
        mean_reduce(&grads)
    }

    /// Unbiased stochastic gradient `∇f_i(x, ξ)`; a pure function of
    /// `(stream seed, worker, t)`.
    pub fn stoch_grad(
        &self,
        worker: usize,
        x: &ModelVector,
        t: u64,
        seed: u64,
    ) -> Result<GradientSample> {
        self.check(x)?;
        self.check_worker(worker)?;
        let xs = x.as_slice();
        match &self.objective {
            Objective::Quadratic { shards, sigma, .. } => {
                let mut g = shards[worker].gradient(xs);
                if *sigma > 0.0 {
                    let std = sigma / (self.dim as f64).sqrt();
                    let mut rng = RngStream::new(seed, worker as u32, Purpose::Noise).at(t);
                    for v in g.iter_mut() {
                        *v += std * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                Ok(GradientSample {
                    worker,
                    gradient: ModelVector::new(g)?,
                    draw: Draw::Noise { t },
                })
            }
            Objective::Logistic(data) => {
                let range = data.shards[worker].clone();
                let mut rng = RngStream::new(seed, worker as u32, Purpose::Data).at(t);
                let index = rng.random_range(range);
                Ok(GradientSample {
                    worker,
                    gradient: self.sample_grad(index, x)?,
                    draw: Draw::Sample { index },
                })
            }
        }
    }

    /// Regularized gradient of one logistic sample.
    pub fn sample_grad(&self, index: usize, x: &ModelVector) -> Result<ModelVector> {
        self.check(x)?;
        let Objective::Logistic(data) = &self.objective else {
            return Err(Error::invalid("problem", "per-sample gradients need a dataset"));
        };
        if index >= data.labels.len() {
            return Err(Error::invalid("index", format!("{index} out of range")));
        }
        let xs = x.as_slice();
        let mut out: Vec<f64> = xs.iter().map(|v| LOGISTIC_L2 * v).collect();
        data.add_sample_grad(index, xs, 1.0, &mut out);
        ModelVector::new(out)
    }
}

/// Central finite differences of the global objective with step `h`.
pub fn fd_gradient(p: &ProblemInstance, x: &ModelVector, h: f64) -> Result<ModelVector> {
    fd_gradient_of(|y| p.objective(y), x, h)
}

/// Central finite differences of an arbitrary scalar function.
pub fn fd_gradient_of<F>(f: F, x: &ModelVector, h: f64) -> Result<ModelVector>
where
    F: Fn(&ModelVector) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("h", "must be positive"));
    }
    let mut out = Vec::with_capacity(x.dim());
    let mut probe = x.clone().into_inner();
    for j in 0..x.dim() {
        let orig = probe[j];
        probe[j] = orig + h;
        let up = f(&ModelVector::new(probe.clone())?)?;
        probe[j] = orig - h;
        let down = f(&ModelVector::new(probe.clone())?)?;
        probe[j] = orig;
        out.push((up - down) / (2.0 * h));
    }
    ModelVector::new(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::{axpy, sq_dist};

    fn random_point(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> ModelVector {
        ModelVector::new((0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).unwrap()
    }

    fn rel_err(a: &ModelVector, b: &ModelVector) -> f64 {
        sq_dist(a, b).unwrap().sqrt() / b.norm().max(1e-12)
    }

    #[test]
    fn identity_quadratic_gradient_is_x() {
        let p = make_quadratic(5, 1, 1.0, 0.0, 3).unwrap();
        assert_eq!(p.smoothness(), 1.0);
        let x = ModelVector::new(vec![1., -2., 0.5, 3., 0.]).unwrap();
        let c = p.minimizer().unwrap();
        let expected = x.sub(c).unwrap();
        assert_eq!(p.full_grad(&x).unwrap(), expected);
    }

    #[test]
    fn unit_condition_gradient_step_lands_on_minimizer() {
        let p = make_quadratic(6, 4, 1.0, 0.0, 11).unwrap();
        assert_eq!(p.smoothness(), 1.0);
        let x0 = ModelVector::new(vec![3.0; 6]).unwrap();
        let x1 = axpy(-1.0, &p.full_grad(&x0).unwrap(), &x0).unwrap();
        assert!(sq_dist(&x1, p.minimizer().unwrap()).unwrap().sqrt() < 1e-12);
    }

    #[test]
    fn closed_form_minimizer_matches_gradient_descent() {
        // Oracle: long-run deterministic gradient descent with η = 1/L.
        let p = make_quadratic(8, 3, 5.0, 0.0, 7).unwrap();
        let eta = 1.0 / p.smoothness();
        let mut x = p.initial_point();
        for _ in 0..5000 {
            x = axpy(-eta, &p.full_grad(&x).unwrap(), &x).unwrap();
        }
        let star = p.minimizer().unwrap();
        let f_gd = p.objective(&x).unwrap();
        let f_star = p.objective(star).unwrap();
        assert!((f_gd - f_star).abs() <= 1e-8, "{f_gd} vs {f_star}");
        assert!(p.loss(&x).unwrap() <= 1e-8);
        assert!(p.full_grad(star).unwrap().inf_norm() <= 1e-10);
    }

    #[test]
    fn hessian_eigenvalues_respect_condition() {
        let p = make_quadratic(10, 3, 20.0, 0.0, 1).unwrap();
        assert!(p.smoothness() <= 20.0 + 1e-12);
        if let Objective::Quadratic { shards, .. } = &p.objective {
            for s in shards {
                let eig = s.dense_hessian().symmetric_eigenvalues();
                assert!(eig.min() >= 1.0 - 1e-12, "{}", eig.min());
                assert!(eig.max() <= p.smoothness() + 1e-12);
            }
        }
    }

    #[test]
    fn gradients_are_lipschitz_with_declared_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in [
            make_quadratic(12, 3, 10.0, 0.5, 2).unwrap(),
            make_logistic(12, 3, 40, 2).unwrap(),
        ] {
            let l = p.smoothness();
            for _ in 0..100 {
                let x = random_point(&mut rng, 12, 3.0);
                let y = random_point(&mut rng, 12, 3.0);
                let dxy = sq_dist(&x, &y).unwrap().sqrt();
                for i in 0..p.workers() {
                    let gx = p.worker_grad(i, &x).unwrap();
                    let gy = p.worker_grad(i, &y).unwrap();
                    assert!(sq_dist(&gx, &gy).unwrap().sqrt() <= l * dxy * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn noiseless_stochastic_gradient_is_exact() {
        let p = make_quadratic(7, 2, 4.0, 0.0, 5).unwrap();
        let x = ModelVector::new(vec![0.3; 7]).unwrap();
        let g = p.stoch_grad(1, &x, 17, 99).unwrap();
        assert_eq!(g.gradient, p.worker_grad(1, &x).unwrap());
    }

    #[test]
    fn quadratic_noise_is_unbiased_with_variance_sigma_squared() {
        // Oracle: Monte-Carlo averages over independent iterations.
        let sigma = 0.8;
        let dim = 6;
        let p = make_quadratic(dim, 2, 3.0, sigma, 21).unwrap();
        let x = ModelVector::new(vec![0.5; dim]).unwrap();
        let exact = p.worker_grad(0, &x).unwrap();

        let n = 100_000u64;
        let mut sum = vec![0.0; dim];
        for t in 0..n {
            let g = p.stoch_grad(0, &x, t, 4).unwrap().gradient;
            for (s, v) in sum.iter_mut().zip(g.iter()) {
                *s += v;
            }
        }
        let tol = 3.0 * sigma / (n as f64).sqrt();
        for j in 0..dim {
            let mean = sum[j] / n as f64;
            assert!((mean - exact[j]).abs() <= tol, "coord {j}: {mean} vs {}", exact[j]);
        }

        let m = 10_000u64;
        let var: f64 = (0..m)
            .map(|t| sq_dist(&p.stoch_grad(0, &x, t, 5).unwrap().gradient, &exact).unwrap())
            .sum::<f64>()
            / m as f64;
        assert!((var - sigma * sigma).abs() <= 0.05 * sigma * sigma, "{var}");
    }

    #[test]
    fn noise_variance_bounded_at_random_iterates() {
        let sigma = 1.5;
        let p = make_quadratic(20, 3, 8.0, sigma, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for k in 0..10 {
            let x = random_point(&mut rng, 20, 2.0);
            let exact = p.worker_grad(k % 3, &x).unwrap();
            let m = 2000u64;
            let var: f64 = (0..m)
                .map(|t| sq_dist(&p.stoch_grad(k % 3, &x, t, k as u64).unwrap().gradient, &exact).unwrap())
                .sum::<f64>()
                / m as f64;
            // Monte-Carlo slack: the estimator's relative sd is sqrt(2/(d·m)) ≈ 0.7%.
            assert!(var <= sigma * sigma * 1.05, "{var}");
        }
    }

    #[test]
    fn stochastic_gradient_is_pure_in_seed_worker_and_t() {
        let p = make_logistic(5, 3, 10, 1).unwrap();
        let x = ModelVector::new(vec![0.1; 5]).unwrap();
        let a = p.stoch_grad(2, &x, 33, 8).unwrap();
        let b = p.stoch_grad(2, &x, 33, 8).unwrap();
        assert_eq!(a.gradient, b.gradient);
        assert_eq!(a.draw, b.draw);
        if let Draw::Sample { index } = a.draw {
            assert!(p.shards().unwrap()[2].contains(&index));
        } else {
            panic!("expected a sample draw");
        }
    }

    #[test]
    fn logistic_gradient_at_zero() {
        let p = make_logistic(4, 2, 25, 3).unwrap();
        let Objective::Logistic(data) = &p.objective else { unreachable!() };
        let n = data.labels.len() as f64;
        let mut expected = vec![0.0; 4];
        for (a, y) in data.features.iter().zip(&data.labels) {
            for (e, v) in expected.iter_mut().zip(a) {
                *e += -0.5 * y * v / n;
            }
        }
        let g = p.full_grad(&ModelVector::zeros(4)).unwrap();
        for j in 0..4 {
            assert!((g[j] - expected[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn shard_gradient_is_mean_of_sample_gradients() {
        // Oracle: enumerate every sample in the shard.
        let p = make_logistic(6, 3, 17, 4).unwrap();
        let x = ModelVector::new(vec![0.2, -0.1, 0.4, 0.0, 1.0, -0.7]).unwrap();
        for (i, range) in p.shards().unwrap().iter().enumerate() {
            let grads: Vec<ModelVector> = range.clone().map(|j| p.sample_grad(j, &x).unwrap()).collect();
            let mean = mean_reduce(&grads).unwrap();
            assert!(rel_err(&mean, &p.worker_grad(i, &x).unwrap()) < 1e-13);
        }
    }

    #[test]
    fn shards_are_disjoint_and_cover_the_dataset() {
        let p = make_logistic(3, 5, 7, 4).unwrap();
        let mut seen = vec![0u32; p.dataset_len().unwrap()];
        for r in p.shards().unwrap() {
            for j in r.clone() {
                seen[j] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn full_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let q = make_quadratic(10, 4, 10.0, 1.0, 3).unwrap();
        let l = make_logistic(10, 4, 30, 3).unwrap();
        for _ in 0..10 {
            let x = random_point(&mut rng, 10, 1.0);
            assert!(rel_err(&fd_gradient(&q, &x, 1e-5).unwrap(), &q.full_grad(&x).unwrap()) <= 1e-6);
            assert!(rel_err(&fd_gradient(&l, &x, 1e-5).unwrap(), &l.full_grad(&x).unwrap()) <= 1e-4);
        }
    }

    #[test]
    fn fd_of_linear_function_is_exact() {
        let b = [1.5, -2.0, 0.25];
        let linear = |x: &ModelVector| Ok(x.iter().zip(&b).map(|(u, v)| u * v).sum::<f64>());
        let x = ModelVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let fd = fd_gradient_of(linear, &x, 1e-3).unwrap();
        for j in 0..3 {
            assert!((fd[j] - b[j]).abs() < 1e-10, "{} vs {}", fd[j], b[j]);
        }
        assert!(fd_gradient_of(linear, &x, 0.0).is_err());
    }

    #[test]
    fn homogeneous_option_gives_identical_workers() {
        let p = make_quadratic_with(QuadraticSpec {
            dim: 5,
            workers: 4,
            condition: 6.0,
            sigma: 0.0,
            seed: 3,
            homogeneous: true,
        })
        .unwrap();
        assert_eq!(p.heterogeneity(), Heterogeneity::Identical);
        let x = ModelVector::new(vec![1.0; 5]).unwrap();
        let g0 = p.worker_grad(0, &x).unwrap();
        for i in 1..4 {
            assert_eq!(p.worker_grad(i, &x).unwrap(), g0);
        }
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        assert!(make_quadratic(0, 1, 1.0, 0.0, 0).is_err());
        assert!(make_quadratic(3, 0, 1.0, 0.0, 0).is_err());
        assert!(make_quadratic(3, 1, 0.5, 0.0, 0).is_err());
        assert!(make_quadratic(3, 1, 2.0, -1.0, 0).is_err());
        assert!(make_logistic(3, 1, 0, 0).is_err());
        let p = make_quadratic(3, 2, 2.0, 0.0, 0).unwrap();
        assert!(p.stoch_grad(2, &ModelVector::zeros(3), 0, 0).is_err());
        assert!(p.full_grad(&ModelVector::zeros(4)).is_err());
    }
}
