//! Linear-speedup sweep: scale the step size with the worker count and
//! shrink the iteration budget accordingly; the final losses should agree.
//!
//!     cargo run --release --example speedup_sweep -- [eta_1] [T_1] [algorithm] [compressor] [heterogeneous]

use liec::experiment::{run_speedup_sweep, AlgorithmSet, ExperimentConfig, ScheduleKind, SCHEMA_VERSION};
use liec::problems::ProblemKind;
use liec::{CompressorSpec, Fidelity};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let eta: f64 = args.first().map_or(Ok(1e-3), |s| s.parse())?;
    let iterations: usize = args.get(1).map_or(Ok(16_000), |s| s.parse())?;
    let algorithm: AlgorithmSet = args.get(2).map_or("liec,psgd", String::as_str).parse()?;
    let compressor: CompressorSpec = args.get(3).map_or("random-k:25", String::as_str).parse()?;
    // Identical worker objectives by default: with heterogeneous shards the
    // O(η²) heterogeneity term grows with η_N = N·η_1 and dominates.
    let heterogeneous: bool = args.get(4).map_or(Ok(false), |s| s.parse())?;

    let out = std::env::temp_dir().join("liec-speedup-example");
    let config = ExperimentConfig {
        schema: SCHEMA_VERSION,
        algorithm,
        problem: ProblemKind::Quadratic,
        dim: 100,
        workers: 1,
        sigma: 1.0,
        condition: 10.0,
        samples_per_worker: 64,
        heterogeneous,
        compressor,
        server_compressor: None,
        schedule: ScheduleKind::Constant,
        eta: Some(eta),
        delta: None,
        period: None,
        iterations,
        seed: 0,
        problem_seed: None,
        fidelity: Fidelity::Lossless,
        out: out.clone(),
        repeats: 3,
        threads: 1,
        record_timing: false,
    };
    let report = run_speedup_sweep(&config, &[1, 2, 4, 8])?;
    for s in &report.series {
        println!("{}", s.algorithm);
        for r in &s.rows {
            println!(
                "  N={:<2} eta={:.4e} T={:<6} tail loss {:.5e}  per seed {:?}  ({:.0} ms)",
                r.workers, r.eta, r.iterations, r.tail_loss, r.per_seed_tail_loss, r.wall_ms
            );
        }
        if let Some(spread) = s.relative_spread {
            println!("  relative spread {spread:.3} (tolerance {})", report.tolerance);
        }
    }
    println!("report: {}", out.join("sweep.json").display());
    Ok(())
}
