//! Config-driven experiments: single runs with repeats, worker-count
//! sweeps, the invariant contract suite and contraction measurement.
//!
//! Output layout of [`run_experiment`]:
//!
//! ```text
//! <out>/summary.json
//! <out>/<algo>/summary.json
//! <out>/<algo>/<seed>/metrics.csv
//! <out>/<algo>/<seed>/summary.json
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algorithms::{
    Algorithm, BoundMonitor, InvariantMonitor, RoundObserver, RoundOutcome, ScheduleSpec,
};
use crate::compressors::{compress_randk, decompress, measure_delta, CompressorSpec};
use crate::error::{Error, Result};
use crate::harness::driver::{simulate_observed, Divergence, RunResult, RunSpec};
use crate::harness::fabric::Fidelity;
use crate::harness::metrics::{metrics_flush, summarize, IterationRecord, MetricsSummary};
use crate::numerics::{ModelVector, Purpose, RngStream};
use crate::problems::{make_logistic, make_quadratic_with, Heterogeneity, ProblemInstance, ProblemKind, QuadraticSpec};

/// Version of the config format understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Relative spread of final losses tolerated by a speedup sweep.
pub const SPEEDUP_TOLERANCE: f64 = 0.2;

/// One or more algorithms, written as `"liec"`, `"liec,psgd"` or `"all"`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlgorithmSet(pub Vec<Algorithm>);

impl FromStr for AlgorithmSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "all" {
            return Ok(AlgorithmSet(Algorithm::ALL.to_vec()));
        }
        let mut out = Vec::new();
        for name in s.split(',').map(str::trim) {
            let a: Algorithm = name.parse()?;
            if !out.contains(&a) {
                out.push(a);
            }
        }
        Ok(AlgorithmSet(out))
    }
}

impl fmt::Display for AlgorithmSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(Algorithm::name).collect();
        f.write_str(&names.join(","))
    }
}

impl Serialize for AlgorithmSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AlgorithmSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    Constant,
    Tuned,
}

/// A flat TOML experiment description. Unknown keys are rejected.
///
/// ```toml
/// schema = 1
/// algorithm = "liec,double-squeeze"
/// problem = "quadratic"
/// dim = 100
/// workers = 8
/// sigma = 1.0
/// condition = 10.0
/// compressor = "top-k:10"
/// period = 10
/// eta = 0.01
/// iterations = 2000
/// seed = 1
/// repeats = 3
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub algorithm: AlgorithmSet,
    pub problem: ProblemKind,
    pub dim: usize,
    pub workers: usize,
    /// Gradient noise level (quadratic).
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    /// Hessian condition-number target (quadratic).
    #[serde(default = "defaults::condition")]
    pub condition: f64,
    /// Shard size (logistic).
    #[serde(default = "defaults::samples_per_worker")]
    pub samples_per_worker: usize,
    /// Distinct per-worker objectives (quadratic). Logistic problems always
    /// use i.i.d. shards.
    #[serde(default = "defaults::yes")]
    pub heterogeneous: bool,
    pub compressor: CompressorSpec,
    /// Server-side compressor; defaults to `compressor`.
    #[serde(default)]
    pub server_compressor: Option<CompressorSpec>,
    #[serde(default)]
    pub schedule: ScheduleKind,
    /// Constant step size (required for `schedule = "constant"`).
    #[serde(default)]
    pub eta: Option<f64>,
    /// Contraction parameter for the schedule and monitors; defaults to the
    /// compressor's nominal value.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Averaging period; defaults to `⌊1/δ⌋`.
    #[serde(default)]
    pub period: Option<usize>,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Seed of the problem instance; defaults to `seed`.
    #[serde(default)]
    pub problem_seed: Option<u64>,
    #[serde(default)]
    pub fidelity: Fidelity,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,
    #[serde(default = "defaults::one")]
    pub repeats: usize,
    #[serde(default = "defaults::one")]
    pub threads: usize,
    #[serde(default)]
    pub record_timing: bool,
}

mod defaults {
    use std::path::PathBuf;

    pub fn sigma() -> f64 {
        1.0
    }
    pub fn condition() -> f64 {
        10.0
    }
    pub fn samples_per_worker() -> usize {
        64
    }
    pub fn yes() -> bool {
        true
    }
    pub fn out() -> PathBuf {
        PathBuf::from("results")
    }
    pub fn one() -> usize {
        1
    }
}

/// Maps a TOML error to the key it concerns.
fn toml_error(src: &str, err: toml::de::Error) -> Error {
    let message = err.message().trim().to_string();
    let quoted = |prefix: &str| {
        message
            .strip_prefix(prefix)
            .and_then(|rest| rest.split('`').next())
            .map(str::to_string)
    };
    let field = quoted("unknown field `")
        .or_else(|| quoted("missing field `"))
        .or_else(|| {
            let start = err.span()?.start;
            let line_start = src[..start].rfind('\n').map_or(0, |i| i + 1);
            let line = &src[line_start..];
            let key = line.split('=').next()?.trim();
            (!key.is_empty() && !key.contains('\n')).then(|| key.to_string())
        })
        .unwrap_or_else(|| "<config>".to_string());
    Error::config(field, message)
}

impl ExperimentConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let config: Self = toml::from_str(src).map_err(|e| toml_error(src, e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&src)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks every field; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::config(
                "schema",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema),
            ));
        }
        if self.algorithm.0.is_empty() {
            return Err(Error::config("algorithm", "no algorithm given"));
        }
        for (field, value) in [
            ("dim", self.dim),
            ("workers", self.workers),
            ("iterations", self.iterations),
            ("repeats", self.repeats),
        ] {
            if value == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::config("sigma", "must be finite and non-negative"));
        }
        if !(self.condition.is_finite() && self.condition >= 1.0) {
            return Err(Error::config("condition", "must be at least 1"));
        }
        if self.problem == ProblemKind::Logistic && self.samples_per_worker == 0 {
            return Err(Error::config("samples_per_worker", "must be at least 1"));
        }
        self.compressor
            .validate(self.dim)
            .map_err(|e| Error::config("compressor", e.to_string()))?;
        if let Some(s) = &self.server_compressor {
            s.validate(self.dim)
                .map_err(|e| Error::config("server_compressor", e.to_string()))?;
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::config("delta", "must lie in (0, 1]"));
            }
        }
        if self.period == Some(0) {
            return Err(Error::config("period", "must be at least 1"));
        }
        match (self.schedule, self.eta) {
            (ScheduleKind::Constant, None) => {
                return Err(Error::config("eta", "required when schedule = \"constant\""));
            }
            (ScheduleKind::Constant, Some(eta)) if !(eta.is_finite() && eta > 0.0) => {
                return Err(Error::config("eta", "must be positive"));
            }
            (ScheduleKind::Tuned, Some(_)) => {
                return Err(Error::config("eta", "not allowed when schedule = \"tuned\""));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn server_compressor(&self) -> CompressorSpec {
        self.server_compressor.unwrap_or(self.compressor)
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or_else(|| self.compressor.nominal_delta(self.dim))
    }

    pub fn period(&self) -> usize {
        self.period.unwrap_or_else(|| self.compressor.default_period(self.dim))
    }

    pub fn problem_seed(&self) -> u64 {
        self.problem_seed.unwrap_or(self.seed)
    }

    /// Builds the problem for `workers` workers.
    pub fn build_problem(&self, workers: usize) -> Result<ProblemInstance> {
        match self.problem {
            ProblemKind::Quadratic => make_quadratic_with(QuadraticSpec {
                dim: self.dim,
                workers,
                condition: self.condition,
                sigma: self.sigma,
                seed: self.problem_seed(),
                homogeneous: !self.heterogeneous,
            }),
            ProblemKind::Logistic => make_logistic(self.dim, workers, self.samples_per_worker, self.problem_seed()),
        }
    }

    fn schedule_spec(&self, eta_scale: f64) -> ScheduleSpec {
        match self.schedule {
            ScheduleKind::Constant => ScheduleSpec::Constant {
                eta: self.eta.unwrap_or(0.0) * eta_scale,
            },
            ScheduleKind::Tuned => ScheduleSpec::Tuned,
        }
    }

    fn run_spec(&self, algorithm: Algorithm, problem: &ProblemInstance, iterations: usize, eta_scale: f64, seed: u64) -> Result<RunSpec> {
        let eta = self
            .schedule_spec(eta_scale)
            .resolve(iterations as u64, problem.workers(), problem.smoothness(), self.delta())
            .map_err(|e| Error::config("eta", e.to_string()))?;
        Ok(RunSpec {
            algorithm,
            worker_compressor: self.compressor,
            server_compressor: self.server_compressor(),
            period: self.period(),
            eta,
            iterations,
            seed,
            fidelity: self.fidelity,
            threads: self.threads,
            record_timing: self.record_timing,
        })
    }
}

/// Mean and sample standard deviation (`None` for fewer than two values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Stat { mean, std }
    }
}

/// Invariant checks attached to every run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    /// Worst scaled virtual-sequence deviation; `None` in wire mode, where
    /// 32-bit rounding of transmitted models breaks the exact identity.
    pub virtual_worst: Option<f64>,
    pub sync_rounds: u64,
    pub sync_violations: u64,
}

impl InvariantSummary {
    fn from_monitor(m: &InvariantMonitor, fidelity: Fidelity) -> Self {
        Self {
            virtual_worst: (fidelity == Fidelity::Lossless).then_some(m.virtual_worst),
            sync_rounds: m.sync.sync_rounds,
            sync_violations: m.sync.violations,
        }
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(v) = self.virtual_worst {
            if !(v <= crate::algorithms::monitors::VIRTUAL_TOLERANCE) {
                out.push(format!("virtual-sequence deviation {v:.3e}"));
            }
        }
        if self.sync_violations > 0 {
            out.push(format!("{} sync-round violations", self.sync_violations));
        }
        out
    }
}

/// `<out>/<algo>/<seed>/summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub problem: ProblemKind,
    pub heterogeneity: Heterogeneity,
    pub dim: usize,
    pub workers: usize,
    pub iterations: usize,
    pub eta: f64,
    pub period: usize,
    pub worker_compressor: CompressorSpec,
    pub server_compressor: CompressorSpec,
    pub fidelity: Fidelity,
    pub diverged: Option<Divergence>,
    pub metrics: MetricsSummary,
    /// Time average of `err_sq` over all rows.
    pub mean_err_sq: Option<f64>,
    pub invariants: InvariantSummary,
}

/// Time average of `err_sq`.
pub fn mean_err_sq(records: &[IterationRecord]) -> Option<f64> {
    (!records.is_empty()).then(|| records.iter().map(|r| r.err_sq).sum::<f64>() / records.len() as f64)
}

/// `<out>/<algo>/summary.json`: statistics over repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub heterogeneity: Heterogeneity,
    pub seeds: Vec<u64>,
    pub diverged_runs: usize,
    pub final_loss: Stat,
    pub min_grad_sq: Stat,
    pub peak_err_sq: Stat,
    pub mean_err_sq: Stat,
    pub total_uplink_bytes: Stat,
    pub total_downlink_bytes: Stat,
    pub total_avg_bytes: Stat,
}

impl AlgorithmSummary {
    /// Aggregates per-repeat summaries (in the given order).
    pub fn aggregate(runs: &[RunSummary]) -> Result<Self> {
        let first = runs.first().ok_or(Error::EmptyReduction)?;
        let stat = |f: &dyn Fn(&RunSummary) -> f64| Stat::of(&runs.iter().map(f).collect::<Vec<_>>());
        Ok(Self {
            algorithm: first.algorithm,
            heterogeneity: first.heterogeneity,
            seeds: runs.iter().map(|r| r.seed).collect(),
            diverged_runs: runs.iter().filter(|r| r.diverged.is_some()).count(),
            final_loss: stat(&|r| r.metrics.final_loss.unwrap_or(f64::NAN)),
            min_grad_sq: stat(&|r| r.metrics.min_grad_sq.unwrap_or(f64::NAN)),
            peak_err_sq: stat(&|r| r.metrics.peak_err_sq.unwrap_or(f64::NAN)),
            mean_err_sq: stat(&|r| r.mean_err_sq.unwrap_or(f64::NAN)),
            total_uplink_bytes: stat(&|r| r.metrics.total_uplink_bytes as f64),
            total_downlink_bytes: stat(&|r| r.metrics.total_downlink_bytes as f64),
            total_avg_bytes: stat(&|r| r.metrics.total_avg_bytes as f64),
        })
    }
}

/// `<out>/summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub algorithms: Vec<AlgorithmSummary>,
    /// Human-readable invariant failures across all runs; empty when clean.
    pub invariant_failures: Vec<String>,
}

/// In-memory result of [`run_experiment`]; the same data is on disk.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub runs: Vec<(RunSummary, Vec<IterationRecord>)>,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs one algorithm/seed pair with invariant monitoring.
pub fn run_single(
    config: &ExperimentConfig,
    problem: &ProblemInstance,
    algorithm: Algorithm,
    iterations: usize,
    eta_scale: f64,
    seed: u64,
) -> Result<(RunSummary, RunResult)> {
    let spec = config.run_spec(algorithm, problem, iterations, eta_scale, seed)?;
    let mut monitor = InvariantMonitor::new(&problem.initial_point(), config.delta(), problem.workers(), spec.eta);
    let result = simulate_observed(problem, &spec, &mut monitor)?;
    let mut invariants = InvariantSummary::from_monitor(&monitor, spec.fidelity);
    if algorithm != Algorithm::Liec {
        // Only LIEC has synchronization rounds.
        invariants.sync_rounds = 0;
    }
    let summary = RunSummary {
        algorithm,
        seed,
        problem: problem.kind(),
        heterogeneity: problem.heterogeneity(),
        dim: problem.dim(),
        workers: problem.workers(),
        iterations,
        eta: spec.eta,
        period: spec.period,
        worker_compressor: spec.worker_compressor,
        server_compressor: spec.server_compressor,
        fidelity: spec.fidelity,
        diverged: result.diverged.clone(),
        metrics: summarize(&result.records),
        mean_err_sq: mean_err_sq(&result.records),
        invariants,
    };
    Ok((summary, result))
}

/// Runs every configured algorithm `repeats` times (seeds `seed`,
/// `seed + 1`, …) and writes the output tree under `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let problem = config.build_problem(config.workers)?;
    let mut all_runs = Vec::new();
    let mut aggregates = Vec::new();
    let mut failures = Vec::new();

    for &algorithm in &config.algorithm.0 {
        let algo_dir = config.out.join(algorithm.name());
        let runs: Vec<(RunSummary, Vec<IterationRecord>)> = (0..config.repeats as u64)
            .into_par_iter()
            .map(|r| {
                let seed = config.seed + r;
                let (summary, result) = run_single(config, &problem, algorithm, config.iterations, 1.0, seed)?;
                let dir = algo_dir.join(seed.to_string());
                metrics_flush(&result.records, &dir.join("metrics.csv"))?;
                write_json(&summary, &dir.join("summary.json"))?;
                Ok((summary, result.records))
            })
            .collect::<Result<_>>()?;
        for (s, _) in &runs {
            failures.extend(
                s.invariants
                    .failures()
                    .into_iter()
                    .map(|f| format!("{}/{}: {f}", algorithm, s.seed)),
            );
            if let Some(d) = &s.diverged {
                failures.push(format!("{}/{}: diverged at t={}: {}", algorithm, s.seed, d.t, d.reason));
            }
        }
        let summaries: Vec<RunSummary> = runs.iter().map(|(s, _)| s.clone()).collect();
        let aggregate = AlgorithmSummary::aggregate(&summaries)?;
        write_json(&aggregate, &algo_dir.join("summary.json"))?;
        aggregates.push(aggregate);
        all_runs.extend(runs);
    }

    let summary = ExperimentSummary {
        schema: SCHEMA_VERSION,
        config: config.clone(),
        algorithms: aggregates,
        invariant_failures: failures,
    };
    write_json(&summary, &config.out.join("summary.json"))?;
    Ok(ExperimentOutcome {
        summary,
        runs: all_runs,
    })
}

/// One worker count of a speedup sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub workers: usize,
    pub eta: f64,
    pub iterations: usize,
    /// Last-row loss, averaged over seeds.
    pub final_loss: f64,
    /// Loss averaged over the last tenth of the run, then over seeds.
    pub tail_loss: f64,
    pub per_seed_tail_loss: Vec<f64>,
    /// Wall-clock for all seeds of this row.
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub algorithm: Algorithm,
    pub rows: Vec<SweepRow>,
    /// `(max − min) / mean` of the rows' tail losses (two or more rows).
    pub relative_spread: Option<f64>,
    /// Whether the spread is within tolerance (two or more rows).
    pub agree: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub tolerance: f64,
    pub series: Vec<SweepSeries>,
}

impl SweepReport {
    pub fn all_agree(&self) -> bool {
        self.series.iter().all(|s| s.agree != Some(false))
    }
}

/// Mean loss over the last `⌈len/10⌉` rows.
pub fn tail_loss(records: &[IterationRecord]) -> f64 {
    let window = records.len().div_ceil(10).max(1);
    let tail = &records[records.len() - window..];
    tail.iter().map(|r| r.loss).sum::<f64>() / tail.len() as f64
}

/// Linear-speedup sweep: for each `N` the step size is `N · eta` and the
/// iteration budget is `iterations / N`, so `η·T` stays fixed. Each row
/// averages `repeats` seeds. Per-cell CSVs go to
/// `<out>/sweep/<algo>/n<N>/<seed>/metrics.csv` and the report to
/// `<out>/sweep.json`.
pub fn run_speedup_sweep(config: &ExperimentConfig, worker_counts: &[usize]) -> Result<SweepReport> {
    config.validate()?;
    if worker_counts.is_empty() {
        return Err(Error::config("workers", "at least one worker count is required"));
    }
    if let Some(&n) = worker_counts.iter().find(|&&n| n == 0 || n > config.iterations) {
        return Err(Error::config(
            "workers",
            format!("worker count {n} must lie in 1..={}", config.iterations),
        ));
    }
    let mut series = Vec::new();
    for &algorithm in &config.algorithm.0 {
        let mut rows = Vec::new();
        for &n in worker_counts {
            let problem = config.build_problem(n)?;
            let iterations = config.iterations / n;
            let started = Instant::now();
            let cells: Vec<(RunSummary, RunResult)> = (0..config.repeats as u64)
                .into_par_iter()
                .map(|r| run_single(config, &problem, algorithm, iterations, n as f64, config.seed + r))
                .collect::<Result<_>>()?;
            let wall_ms = started.elapsed().as_secs_f64() * 1e3;
            for (s, result) in &cells {
                let path = config
                    .out
                    .join("sweep")
                    .join(algorithm.name())
                    .join(format!("n{n}"))
                    .join(s.seed.to_string())
                    .join("metrics.csv");
                metrics_flush(&result.records, &path)?;
            }
            let per_seed_tail_loss: Vec<f64> = cells.iter().map(|(_, r)| tail_loss(&r.records)).collect();
            let finals: Vec<f64> = cells.iter().map(|(s, _)| s.metrics.final_loss.unwrap_or(f64::NAN)).collect();
            rows.push(SweepRow {
                workers: n,
                eta: cells[0].0.eta,
                iterations,
                final_loss: Stat::of(&finals).mean,
                tail_loss: Stat::of(&per_seed_tail_loss).mean,
                per_seed_tail_loss,
                wall_ms,
            });
        }
        let (relative_spread, agree) = if rows.len() > 1 {
            let losses: Vec<f64> = rows.iter().map(|r| r.tail_loss).collect();
            let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
            let spread = (max - min) / Stat::of(&losses).mean;
            (Some(spread), Some(spread <= SPEEDUP_TOLERANCE))
        } else {
            (None, None)
        };
        series.push(SweepSeries {
            algorithm,
            rows,
            relative_spread,
            agree,
        });
    }
    let report = SweepReport {
        tolerance: SPEEDUP_TOLERANCE,
        series,
    };
    write_json(&report, &config.out.join("sweep.json"))?;
    Ok(report)
}

/// One line of the contract report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractEntry {
    pub name: String,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractReport {
    pub entries: Vec<ContractEntry>,
}

impl ContractReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&ContractEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractOptions {
    pub seed: u64,
    /// δ assumed by the error-bound check; `None` uses the operator's true
    /// value. A wrong value is the suite's negative control.
    pub error_bound_delta: Option<f64>,
    pub threads: usize,
}

impl Default for ContractOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            error_bound_delta: None,
            threads: 1,
        }
    }
}

/// Records `x̄_t` after every round.
#[derive(Default)]
struct Trajectory(Vec<ModelVector>);

impl RoundObserver for Trajectory {
    fn observe(&mut self, round: &RoundOutcome<'_>) -> Result<()> {
        self.0.push(round.optimizer.average_model()?);
        Ok(())
    }
}

fn standard_quadratic(workers: usize, seed: u64) -> Result<ProblemInstance> {
    make_quadratic_with(QuadraticSpec {
        dim: 100,
        workers,
        condition: 10.0,
        sigma: 1.0,
        seed,
        homogeneous: false,
    })
}

/// Runs every invariant check and reports the worst case of each.
pub fn run_contract_suite(options: &ContractOptions) -> Result<ContractReport> {
    let mut entries = Vec::new();
    let seed = options.seed;
    let problem = standard_quadratic(8, seed)?;
    let x0 = problem.initial_point();
    let tol = crate::algorithms::monitors::VIRTUAL_TOLERANCE;

    // Top-k, H = 10: virtual-sequence identity and sync invariants.
    {
        let spec = RunSpec {
            threads: options.threads,
            ..RunSpec::new(Algorithm::Liec, 0.01, 2000, seed)
                .with_compressor(CompressorSpec::TopK { k: 10 })
                .with_period(10)
        };
        let mut monitor = InvariantMonitor::new(&x0, 0.1, 8, spec.eta);
        simulate_observed(&problem, &spec, &mut monitor)?;
        entries.push(ContractEntry {
            name: "virtual-sequence/top-k".into(),
            observed: monitor.virtual_worst,
            bound: tol,
            pass: monitor.virtual_passed(),
            detail: "max_t ‖x̄−x̂−ηe‖∞ / max(1, ‖x̄‖∞), top-k k/d=0.1, H=10, T=2000".into(),
        });
    }

    // Random-k, δ = 0.25, H = 4: error and disagreement bounds, sync rounds.
    {
        let delta = 0.25;
        let spec = RunSpec {
            threads: options.threads,
            ..RunSpec::new(Algorithm::Liec, 0.01, 10_000, seed)
                .with_compressor(CompressorSpec::RandomK { k: 25 })
                .with_period(4)
        };
        let assumed = options.error_bound_delta.unwrap_or(delta);
        let mut observers = (
            InvariantMonitor::new(&x0, delta, 8, spec.eta),
            BoundMonitor::new(assumed, 8, spec.eta),
        );
        simulate_observed(&problem, &spec, &mut observers)?;
        let (monitor, error_bound) = observers;
        entries.push(ContractEntry {
            name: "virtual-sequence/random-k".into(),
            observed: monitor.virtual_worst,
            bound: tol,
            pass: monitor.virtual_passed(),
            detail: "random-k k/d=0.25, H=4, T=10000".into(),
        });
        entries.push(ContractEntry {
            name: "error-bound".into(),
            observed: error_bound.error.worst_ratio,
            bound: 1.0,
            pass: error_bound.error.passed(),
            detail: format!(
                "max_t ‖e_t‖² / bound(δ={assumed}, M̂); {} violations in {} rounds",
                error_bound.error.violations, error_bound.error.checks
            ),
        });
        entries.push(ContractEntry {
            name: "disagreement-bound".into(),
            observed: monitor.bounds.disagreement.worst_ratio,
            bound: 1.0,
            pass: monitor.bounds.disagreement.passed(),
            detail: format!(
                "max_t (1/N)Σ‖x̄−x^i‖² / bound(δ={delta}, η, M̂); {} violations",
                monitor.bounds.disagreement.violations
            ),
        });
        entries.push(ContractEntry {
            name: "sync-invariants".into(),
            observed: monitor.sync.max_residual,
            bound: 0.0,
            pass: monitor.sync.passed() && monitor.sync.sync_rounds == 2500,
            detail: format!(
                "max over {} sync rounds of max(‖e‖, max_i ‖x^i − x^1‖)",
                monitor.sync.sync_rounds
            ),
        });
    }

    // Contraction statistics.
    {
        let mut rng = RngStream::new(seed, 0, Purpose::Compressor).rng();
        let rand_delta = measure_delta(&CompressorSpec::RandomK { k: 25 }, 100, 10_000, &mut rng)?;
        entries.push(ContractEntry {
            name: "contraction/random-k".into(),
            observed: (rand_delta - 0.25).abs(),
            bound: 0.01,
            pass: (rand_delta - 0.25).abs() <= 0.01,
            detail: format!("measured δ = {rand_delta:.5} for k/d = 0.25, 10^4 samples"),
        });
        let top_delta = measure_delta(&CompressorSpec::TopK { k: 25 }, 100, 10_000, &mut rng)?;
        entries.push(ContractEntry {
            name: "contraction/top-k".into(),
            observed: top_delta,
            bound: 0.25,
            pass: (0.25..1.0).contains(&top_delta),
            detail: "measured δ must lie in [k/d, 1)".into(),
        });
        let z = randk_unbiasedness_z(seed)?;
        entries.push(ContractEntry {
            name: "unbiasedness/random-k".into(),
            observed: z,
            bound: 3.0,
            pass: z <= 3.0,
            detail: "max_j |mean C(x)_j − (k/d)x_j| / s.e., 10^5 draws, k/d = 0.25".into(),
        });
    }

    // Identity compressor: every algorithm retraces P-SGD bit for bit.
    {
        let small = make_quadratic_with(QuadraticSpec {
            dim: 20,
            workers: 4,
            condition: 5.0,
            sigma: 1.0,
            seed,
            homogeneous: false,
        })?;
        let trace = |algorithm| -> Result<Vec<ModelVector>> {
            let spec = RunSpec::new(algorithm, 0.05, 1000, seed).with_period(5);
            let mut t = Trajectory::default();
            simulate_observed(&small, &spec, &mut t)?;
            Ok(t.0)
        };
        let reference = trace(Algorithm::Psgd)?;
        let mut worst: f64 = 0.0;
        let mut identical = true;
        for algorithm in [Algorithm::Liec, Algorithm::MemSgd, Algorithm::DoubleSqueeze] {
            for (a, b) in trace(algorithm)?.iter().zip(&reference) {
                identical &= a.bitwise_eq(b);
                worst = worst.max(a.sub(b)?.inf_norm());
            }
        }
        entries.push(ContractEntry {
            name: "identity-collapse".into(),
            observed: worst,
            bound: 0.0,
            pass: identical,
            detail: "max ‖x̄_alg − x̄_psgd‖∞ over T=1000, bitwise comparison".into(),
        });
    }

    Ok(ContractReport { entries })
}

/// Largest per-coordinate z-score of the Monte-Carlo mean of random-k.
fn randk_unbiasedness_z(seed: u64) -> Result<f64> {
    let (d, k, n) = (8usize, 2usize, 100_000usize);
    let p = k as f64 / d as f64;
    let mut rng = RngStream::new(seed, 1, Purpose::Compressor).rng();
    let x = ModelVector::new((0..d).map(|j| (j as f64 + 1.0) * if j % 2 == 0 { 1.0 } else { -0.5 }).collect())?;
    let mut sum = vec![0.0; d];
    for _ in 0..n {
        let c = decompress(&compress_randk(&x, k, &mut rng)?, d)?;
        for (s, v) in sum.iter_mut().zip(c.iter()) {
            *s += v;
        }
    }
    Ok((0..d)
        .map(|j| {
            let se = x[j].abs() * (p * (1.0 - p) / n as f64).sqrt();
            (sum[j] / n as f64 - p * x[j]).abs() / se
        })
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub compressor: CompressorSpec,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    pub delta: f64,
    pub nominal_delta: f64,
}

/// Empirical contraction parameter of `compressor` on Gaussian inputs.
pub fn measure_delta_report(compressor: CompressorSpec, dim: usize, samples: usize, seed: u64) -> Result<DeltaReport> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let delta = measure_delta(&compressor, dim, samples, &mut rng)?;
    Ok(DeltaReport {
        compressor,
        dim,
        samples,
        seed,
        delta,
        nominal_delta: compressor.nominal_delta(dim),
    })
}
