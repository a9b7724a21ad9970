//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use liec::algorithms::{
    tuned_step_size, satisfies_stability_gate, stability_threshold, InvariantMonitor, RoundObserver,
    RoundOutcome,
};
use liec::compressors::{
    compress_blockwise_sign, compress_randk, compress_sign, decompress, measure_delta,
};
use liec::experiment::{
    mean_err_sq, run_experiment, run_speedup_sweep, AlgorithmSet, ExperimentConfig, ScheduleKind,
    SCHEMA_VERSION,
};
use liec::harness::codec::frame_len;
use liec::harness::driver::simulate_observed;
use liec::harness::metrics::write_csv;
use liec::problems::{fd_gradient, make_logistic, make_quadratic, ProblemInstance, ProblemKind};
use liec::{simulate, Algorithm, CompressorSpec, Fidelity, ModelVector, RunSpec};

type Verdict = anyhow::Result<(bool, String)>;

/// d = 100, N = 8, condition 10, σ = 1, heterogeneous workers.
fn standard_quadratic(seed: u64) -> ProblemInstance {
    make_quadratic(100, 8, 10.0, 1.0, seed).expect("standard quadratic")
}

fn timed(budget: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let (pass, detail) = f()?;
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    Ok((
        pass && in_time,
        format!("{detail}; {:.2}s of {:.0}s budget", elapsed.as_secs_f64(), budget.as_secs_f64()),
    ))
}

fn virtual_sequence_identity() -> Verdict {
    timed(Duration::from_secs(5), || {
        let problem = standard_quadratic(11);
        let spec = RunSpec::new(Algorithm::Liec, 0.01, 2000, 1)
            .with_compressor(CompressorSpec::TopK { k: 10 })
            .with_period(10);
        let mut monitor = InvariantMonitor::new(&problem.initial_point(), 0.1, 8, spec.eta);
        simulate_observed(&problem, &spec, &mut monitor)?;
        Ok((
            monitor.virtual_passed(),
            format!(
                "max scaled ‖x̄−x̂−ηe‖∞ = {:.3e} ≤ 1e-10 ({} violations)",
                monitor.virtual_worst, monitor.virtual_violations
            ),
        ))
    })
}

#[derive(Default)]
struct Trajectory(Vec<ModelVector>);

impl RoundObserver for Trajectory {
    fn observe(&mut self, round: &RoundOutcome<'_>) -> liec::Result<()> {
        self.0.push(round.optimizer.average_model()?);
        Ok(())
    }
}

fn identity_collapse() -> Verdict {
    timed(Duration::from_secs(2), || {
        let problem = standard_quadratic(12);
        let trace = |algorithm| -> anyhow::Result<(Vec<ModelVector>, Vec<f64>)> {
            let spec = RunSpec::new(algorithm, 0.01, 1000, 3).with_period(7);
            let mut t = Trajectory::default();
            let run = simulate_observed(&problem, &spec, &mut t)?;
            Ok((t.0, run.records.iter().map(|r| r.loss).collect()))
        };
        let (reference, ref_loss) = trace(Algorithm::Psgd)?;
        let mut mismatches = Vec::new();
        for algorithm in [Algorithm::Liec, Algorithm::MemSgd, Algorithm::DoubleSqueeze] {
            let (xs, loss) = trace(algorithm)?;
            let same = xs.len() == reference.len()
                && xs.iter().zip(&reference).all(|(a, b)| a.bitwise_eq(b))
                && loss.iter().zip(&ref_loss).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                mismatches.push(algorithm.name());
            }
        }
        Ok((
            mismatches.is_empty(),
            format!("1000 iterates bitwise equal to P-SGD; mismatches: {mismatches:?}"),
        ))
    })
}

fn contraction_statistics() -> Verdict {
    timed(Duration::from_secs(5), || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rand_k = measure_delta(&CompressorSpec::RandomK { k: 25 }, 100, 10_000, &mut rng)?;
        let top_k = measure_delta(&CompressorSpec::TopK { k: 25 }, 100, 10_000, &mut rng)?;
        let pass = (rand_k - 0.25).abs() <= 0.01 && (0.25..1.0).contains(&top_k);
        Ok((pass, format!("random-k δ = {rand_k:.4} (0.25 ± 0.01), top-k δ = {top_k:.4} ∈ [0.25, 1)")))
    })
}

fn random_k_unbiased() -> Verdict {
    let (d, k, n) = (8usize, 2usize, 100_000usize);
    let p = k as f64 / d as f64;
    let x = ModelVector::new(vec![1.5, -0.25, 3.0, -2.0, 0.75, 4.0, -1.0, 0.5])?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut sum = vec![0.0; d];
    for _ in 0..n {
        let c = decompress(&compress_randk(&x, k, &mut rng)?, d)?;
        for (s, v) in sum.iter_mut().zip(c.iter()) {
            *s += v;
        }
    }
    // Each coordinate of C(x) is x_j · Bernoulli(k/d).
    let worst = (0..d)
        .map(|j| {
            let se = x[j].abs() * (p * (1.0 - p) / n as f64).sqrt();
            (sum[j] / n as f64 - p * x[j]).abs() / se
        })
        .fold(0.0, f64::max);
    Ok((worst <= 3.0, format!("max |mean − (k/d)x_j| = {worst:.2} standard errors ≤ 3")))
}

/// LIEC with random-k (δ = 0.25), N = 8, H = 4 on the standard quadratic.
fn random_k_monitor(iterations: usize) -> anyhow::Result<InvariantMonitor> {
    let problem = standard_quadratic(13);
    let spec = RunSpec::new(Algorithm::Liec, 0.01, iterations, 5)
        .with_compressor(CompressorSpec::RandomK { k: 25 })
        .with_period(4);
    let mut monitor = InvariantMonitor::new(&problem.initial_point(), 0.25, 8, spec.eta);
    simulate_observed(&problem, &spec, &mut monitor)?;
    Ok(monitor)
}

fn error_bound() -> Verdict {
    let m = random_k_monitor(5000)?;
    let t = m.bounds.error;
    Ok((
        t.passed() && t.checks == 5000,
        format!(
            "{} violations in {} rounds; worst ‖e‖²/bound = {:.4}",
            t.violations, t.checks, t.worst_ratio
        ),
    ))
}

fn disagreement_bound() -> Verdict {
    let m = random_k_monitor(5000)?;
    let t = m.bounds.disagreement;
    Ok((
        t.passed() && t.checks == 5000,
        format!(
            "{} violations in {} rounds; worst disagreement/bound = {:.4}",
            t.violations, t.checks, t.worst_ratio
        ),
    ))
}

fn sync_invariants() -> Verdict {
    let m = random_k_monitor(10_000)?;
    Ok((
        m.sync.passed() && m.sync.sync_rounds == 2500,
        format!(
            "{} sync rounds, {} violations, max residual {:e}",
            m.sync.sync_rounds, m.sync.violations, m.sync.max_residual
        ),
    ))
}

fn error_norm_ordering() -> Verdict {
    let problem = standard_quadratic(14);
    let run = |algorithm| -> anyhow::Result<f64> {
        let spec = RunSpec::new(algorithm, 0.01, 5000, 6)
            .with_compressor(CompressorSpec::TopK { k: 10 })
            .with_period(10);
        Ok(mean_err_sq(&simulate(&problem, &spec)?.records).unwrap_or(f64::NAN))
    };
    let liec = run(Algorithm::Liec)?;
    let ds = run(Algorithm::DoubleSqueeze)?;
    Ok((
        2.0 * liec <= ds,
        format!("mean ‖e‖²: LIEC {liec:.4e}, DoubleSqueeze {ds:.4e}, ratio {:.2} ≥ 2", ds / liec),
    ))
}

fn sign_compression_ratio() -> Verdict {
    let d = 1usize << 20;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = ModelVector::new((0..d).map(|_| rng.random::<f64>() - 0.5).collect())?;
    let dense = (4 * d) as f64;
    let sign = dense / frame_len(&compress_sign(&x)) as f64;
    let blockwise = dense / frame_len(&compress_blockwise_sign(&x, 10)?) as f64;
    Ok((
        sign >= 31.5 && blockwise >= 31.0,
        format!("sign {sign:.3}× ≥ 31.5×, 10-block sign {blockwise:.3}× ≥ 31×"),
    ))
}

fn speedup_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        schema: SCHEMA_VERSION,
        algorithm: AlgorithmSet(vec![Algorithm::Liec]),
        problem: ProblemKind::Quadratic,
        dim: 100,
        workers: 1,
        sigma: 1.0,
        condition: 10.0,
        samples_per_worker: 64,
        // Identical worker objectives (i.i.d. data): the regime in which
        // gradient noise, not heterogeneity, dominates the final loss.
        heterogeneous: false,
        compressor: CompressorSpec::RandomK { k: 25 },
        server_compressor: None,
        schedule: ScheduleKind::Constant,
        eta: Some(1e-3),
        delta: None,
        period: None,
        iterations: 16_000,
        seed: 0,
        problem_seed: None,
        fidelity: Fidelity::Lossless,
        out: out.to_path_buf(),
        repeats: 3,
        threads: 1,
        record_timing: false,
    }
}

fn linear_speedup() -> Verdict {
    timed(Duration::from_secs(60), || {
        let dir = tempfile::tempdir()?;
        let report = run_speedup_sweep(&speedup_config(dir.path()), &[1, 2, 4, 8])?;
        let s = &report.series[0];
        let losses: Vec<String> = s
            .rows
            .iter()
            .map(|r| format!("N={}: {:.3e}", r.workers, r.tail_loss))
            .collect();
        let spread = s.relative_spread.unwrap_or(f64::INFINITY);
        Ok((
            spread <= 0.2,
            format!("tail losses {}; relative spread {spread:.3} ≤ 0.2", losses.join(", ")),
        ))
    })
}

fn gradient_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst = |p: &ProblemInstance| -> anyhow::Result<f64> {
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let x = ModelVector::new((0..p.dim()).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())?;
            let g = p.full_grad(&x)?;
            let fd = fd_gradient(p, &x, 1e-5)?;
            worst = worst.max(fd.sub(&g)?.norm() / g.norm().max(f64::MIN_POSITIVE));
        }
        Ok(worst)
    };
    let quad = worst(&make_quadratic(30, 4, 10.0, 1.0, 2)?)?;
    let logistic = worst(&make_logistic(20, 4, 50, 3)?)?;
    Ok((
        quad <= 1e-5 && logistic <= 1e-4,
        format!("relative FD error: quadratic {quad:.2e} ≤ 1e-5, logistic {logistic:.2e} ≤ 1e-4"),
    ))
}

/// `x = m · 2^e` exactly, as `(m, e)` with `m` an integer.
fn dyadic(x: f64) -> (BigUint, i32) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (BigUint::from(frac), -1074)
    } else {
        (BigUint::from(frac | (1u64 << 52)), exp - 1075)
    }
}

/// `x · 2^shift` as an exact numerator over `2^denominator_shift`.
fn scaled(m: &BigUint, e: i32, shift: i32) -> (BigUint, u32) {
    let total = e + shift;
    if total >= 0 {
        (m << total as u32, 0)
    } else {
        (m.clone(), (-total) as u32)
    }
}

/// Independent evaluation of `1 / (√(T/N) + L + T^{1/3}/δ^{2/3})` with
/// integer arithmetic on exact binary expansions, accurate to ~2^-200.
fn step_size_oracle(t: u64, n: u64, l: f64, delta: f64) -> f64 {
    const P: u32 = 200; // fixed-point bits
    let one = BigUint::from(1u8) << P;
    let t_big = BigUint::from(t);
    // √(T/N) · 2^P = isqrt(T · 2^{2P} / N)
    let sqrt_term = ((&t_big << (2 * P)) / BigUint::from(n)).sqrt();
    // L · 2^P
    let (lm, le) = dyadic(l);
    let (ln, lshift) = scaled(&lm, le, P as i32);
    let l_term = ln >> lshift;
    // T^{1/3} / δ^{2/3} · 2^P = icbrt(T · 2^{3P} / δ²), δ = dm · 2^de
    let (dm, de) = dyadic(delta);
    let num = &t_big << (3 * P);
    let delta_sq = &dm * &dm;
    let cbrt_term = if 2 * de >= 0 {
        (num / (delta_sq << (2 * de) as u32)).cbrt()
    } else {
        ((num << (-2 * de) as u32) / delta_sq).cbrt()
    };
    let denom = sqrt_term + l_term + cbrt_term;
    // η · 2^P = 2^{2P} / denom; convert via a 64-bit-leading-digits ratio.
    let eta_fixed = (&one << P) / denom;
    let bits = eta_fixed.bits() as i32;
    let shift = (bits - 64).max(0);
    let top: u64 = (&eta_fixed >> shift as u32).try_into().expect("64 bits");
    top as f64 * 2f64.powi(shift - P as i32)
}

fn step_size_schedule() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..100 {
        let t = rng.random_range(1..=1_000_000_000u64);
        let n = rng.random_range(1..=256u64);
        let l = 10f64.powf(rng.random_range(-2.0..2.0));
        let delta = rng.random_range(1e-3..=1.0);
        let got = tuned_step_size(t, n as usize, l, delta)?;
        let want = step_size_oracle(t, n, l, delta);
        worst_rel = worst_rel.max((got - want).abs() / want);
    }
    // 12 significant digits.
    let digits_ok = worst_rel <= 5e-13;

    // Gate: T ≥ 1000 L³/δ implies η < δ/(10L), since 1/η > T^{1/3}/δ^{2/3}.
    let mut gate_failures = 0;
    for _ in 0..100 {
        let l = 10f64.powf(rng.random_range(-1.0..0.7));
        let delta = rng.random_range(0.01..=1.0);
        let n = rng.random_range(1..=256usize);
        let threshold = stability_threshold(l, delta);
        assert!((threshold - 1000.0 * l.powi(3) / delta).abs() <= 1e-9 * threshold);
        for factor in [1.0, 1.5, 10.0] {
            let t = (threshold * factor).ceil().max(1.0) as u64;
            let eta = tuned_step_size(t, n, l, delta)?;
            if !satisfies_stability_gate(eta, l, delta) {
                gate_failures += 1;
            }
        }
    }
    Ok((
        digits_ok && gate_failures == 0,
        format!(
            "worst relative error vs 200-bit oracle {worst_rel:.2e} ≤ 5e-13 over 100 tuples; \
             gate failures at T ≥ 1000L³/δ: {gate_failures}"
        ),
    ))
}

fn determinism() -> Verdict {
    // Direct driver runs: byte-identical CSV across repeats and thread counts.
    let problem = standard_quadratic(15);
    let csv = |threads: usize| -> anyhow::Result<Vec<u8>> {
        let spec = RunSpec {
            threads,
            ..RunSpec::new(Algorithm::Liec, 0.01, 2000, 8)
                .with_compressor(CompressorSpec::RandomK { k: 25 })
                .with_period(4)
        };
        let mut buf = Vec::new();
        write_csv(&simulate(&problem, &spec)?.records, &mut buf)?;
        Ok(buf)
    };
    let reference = csv(1)?;
    let mut same = csv(1)? == reference;
    for threads in [2, 4, 8] {
        same &= csv(threads)? == reference;
    }

    // Full experiment pipeline in both fidelity modes.
    for fidelity in [Fidelity::Lossless, Fidelity::Wire] {
        let mut files = Vec::new();
        for threads in [1, 4] {
            let dir = tempfile::tempdir()?;
            let mut config = speedup_config(dir.path());
            config.algorithm = AlgorithmSet(Algorithm::ALL.to_vec());
            config.heterogeneous = true;
            config.workers = 8;
            config.iterations = 500;
            config.eta = Some(0.01);
            config.repeats = 2;
            config.threads = threads;
            config.fidelity = fidelity;
            run_experiment(&config)?;
            let mut contents = Vec::new();
            for a in Algorithm::ALL {
                for seed in 0..2 {
                    contents.push(std::fs::read(
                        dir.path().join(a.name()).join(seed.to_string()).join("metrics.csv"),
                    )?);
                }
            }
            files.push(contents);
        }
        same &= files[0] == files[1];
    }
    Ok((same, "CSV bytes identical across repeats, 1/2/4/8 threads and both fidelity modes".into()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 13] = [
        ("virtual-sequence identity", virtual_sequence_identity),
        ("identity-compressor collapse", identity_collapse),
        ("contraction statistics", contraction_statistics),
        ("random-k unbiasedness", random_k_unbiased),
        ("error bound monitor", error_bound),
        ("disagreement bound monitor", disagreement_bound),
        ("sync-round invariants", sync_invariants),
        ("error-norm ordering", error_norm_ordering),
        ("sign compression ratio", sign_compression_ratio),
        ("linear speedup", linear_speedup),
        ("gradient-oracle fidelity", gradient_oracle),
        ("step-size schedule", step_size_schedule),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => (false, format!("error: {e:#}")),
            Err(_) => (false, "panicked".to_string()),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {:>2} ({name}): {detail}",
            if pass { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
