//! Loads a TOML experiment config (default: configs/standard_quadratic.toml),
//! runs it and prints where the metrics went.
//!
//!     cargo run --release --example experiment_from_config -- [config] [out]

use std::path::PathBuf;

use liec::experiment::{run_experiment, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args.first().map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/standard_quadratic.toml"),
        PathBuf::from,
    );
    let mut config = ExperimentConfig::load(&path)?;
    config.out = args
        .get(1)
        .map_or_else(|| std::env::temp_dir().join("liec-experiment-example"), PathBuf::from);
    let outcome = run_experiment(&config)?;
    for a in &outcome.summary.algorithms {
        println!(
            "{:<15} final loss {:.4e} ± {:.1e}",
            a.algorithm.name(),
            a.final_loss.mean,
            a.final_loss.std.unwrap_or(0.0)
        );
    }
    if !outcome.summary.invariant_failures.is_empty() {
        println!("invariant failures: {:?}", outcome.summary.invariant_failures);
    }
    println!("wrote {}", config.out.display());
    Ok(())
}
