//! All four algorithms on the standard heterogeneous quadratic with top-k
//! compression: final loss, time-averaged error-variable norm and traffic.
//!
//!     cargo run --release --example baseline_comparison -- [k] [period] [eta] [T]

use liec::experiment::mean_err_sq;
use liec::problems::make_quadratic;
use liec::{simulate, Algorithm, CompressorSpec, RunSpec};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k: usize = args.first().map_or(Ok(10), |s| s.parse())?;
    let period: usize = args.get(1).map_or(Ok(10), |s| s.parse())?;
    let eta: f64 = args.get(2).map_or(Ok(0.01), |s| s.parse())?;
    let iterations: usize = args.get(3).map_or(Ok(5000), |s| s.parse())?;

    let problem = make_quadratic(100, 8, 10.0, 1.0, 0)?;
    println!("d=100 N=8 L={:.3} top-{k} H={period} eta={eta} T={iterations}", problem.smoothness());
    println!(
        "{:<15} {:>12} {:>14} {:>12} {:>12} {:>12}",
        "algorithm", "final loss", "mean ‖err‖²", "uplink B", "downlink B", "avg B"
    );
    for algorithm in Algorithm::ALL {
        let spec = RunSpec::new(algorithm, eta, iterations, 7)
            .with_compressor(CompressorSpec::TopK { k })
            .with_period(period);
        let run = simulate(&problem, &spec)?;
        println!(
            "{:<15} {:>12.4e} {:>14.4e} {:>12} {:>12} {:>12}",
            algorithm.name(),
            run.records.last().map_or(f64::NAN, |r| r.loss),
            mean_err_sq(&run.records).unwrap_or(f64::NAN),
            run.totals.uplink,
            run.totals.downlink,
            run.totals.model_average,
        );
    }
    Ok(())
}
