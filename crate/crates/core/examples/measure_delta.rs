//! Empirical contraction parameter of each compressor on Gaussian inputs,
//! next to the value the compressor is nominally guaranteed to achieve.
//!
//!     cargo run --release --example measure_delta -- [dim] [samples]

use liec::experiment::measure_delta_report;
use liec::CompressorSpec;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dim: usize = args.first().map_or(Ok(1000), |s| s.parse())?;
    let samples: usize = args.get(1).map_or(Ok(2000), |s| s.parse())?;
    println!("{:<20} {:>10} {:>10}", "compressor", "measured", "nominal");
    for spec in [
        CompressorSpec::TopK { k: (dim / 100).max(1) },
        CompressorSpec::RandomK { k: (dim / 4).max(1) },
        "sign".parse()?,
        "blockwise-sign:10".parse()?,
    ] {
        let report = measure_delta_report(spec, dim, samples, 0)?;
        println!("{:<20} {:>10.4} {:>10.4}", spec.to_string(), report.delta, report.nominal_delta);
    }
    Ok(())
}
