//! Logistic regression on sharded synthetic data: LIEC with sign
//! compression against uncompressed parallel SGD.

use liec::problems::make_logistic;
use liec::{simulate, Algorithm, CompressorSpec, RunSpec};

fn main() -> anyhow::Result<()> {
    let problem = make_logistic(50, 4, 256, 0)?;
    println!("d=50 N=4 L={:.3}", problem.smoothness());
    for (algorithm, compressor) in [
        (Algorithm::Psgd, CompressorSpec::Identity),
        (Algorithm::Liec, "sign".parse()?),
        (Algorithm::Liec, "blockwise-sign:5".parse()?),
    ] {
        let spec = RunSpec::new(algorithm, 0.05, 3000, 2)
            .with_compressor(compressor)
            .with_period(8);
        let run = simulate(&problem, &spec)?;
        let first = &run.records[0];
        let last = run.records.last().expect("at least one row");
        println!(
            "{:<6} {:<18} loss {:.5} → {:.5}  bytes {}",
            algorithm.name(),
            compressor.to_string(),
            first.loss,
            last.loss,
            run.totals.total()
        );
    }
    Ok(())
}
