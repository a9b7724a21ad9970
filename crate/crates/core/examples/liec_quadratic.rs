//! LIEC on the standard heterogeneous quadratic with the invariant monitor
//! attached: virtual-sequence identity, error and disagreement bounds, and
//! the sync-round resets.
//!
//!     cargo run --release --example liec_quadratic -- [k] [eta] [T]

use liec::algorithms::InvariantMonitor;
use liec::harness::simulate_observed;
use liec::problems::make_quadratic;
use liec::{Algorithm, CompressorSpec, RunSpec};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k: usize = args.first().map_or(Ok(25), |s| s.parse())?;
    let eta: f64 = args.get(1).map_or(Ok(0.01), |s| s.parse())?;
    let iterations: usize = args.get(2).map_or(Ok(5000), |s| s.parse())?;

    let (dim, workers) = (100, 8);
    let problem = make_quadratic(dim, workers, 10.0, 1.0, 0)?;
    let compressor = CompressorSpec::RandomK { k };
    let delta = compressor.nominal_delta(dim);
    let spec = RunSpec::new(Algorithm::Liec, eta, iterations, 1)
        .with_compressor(compressor)
        .with_period(compressor.default_period(dim));
    let mut monitor = InvariantMonitor::new(&problem.initial_point(), delta, workers, eta);
    let run = simulate_observed(&problem, &spec, &mut monitor)?;

    for r in run.records.iter().step_by(iterations / 10 + 1) {
        println!(
            "t={:<6} loss {:.4e}  ‖∇f‖² {:.3e}  ‖e‖² {:.3e}  disagreement {:.3e}",
            r.t, r.loss, r.grad_sq, r.err_sq, r.disagreement
        );
    }
    let b = &monitor.bounds;
    println!("virtual sequence: worst residual {:.2e} ({} violations)", monitor.virtual_worst, monitor.virtual_violations);
    println!(
        "error bound:        worst ratio {:.3} ({} / {} checks violated)",
        b.error.worst_ratio, b.error.violations, b.error.checks
    );
    println!(
        "disagreement bound: worst ratio {:.3} ({} / {} checks violated)",
        b.disagreement.worst_ratio, b.disagreement.violations, b.disagreement.checks
    );
    println!("sync rounds: {} ({} violations)", monitor.sync.sync_rounds, monitor.sync.violations);
    Ok(())
}
