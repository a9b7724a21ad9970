//! The same LIEC run with lossless and wire-fidelity channels. Wire mode
//! sends every payload through the byte codec, so values are rounded to
//! f32; byte counts are identical, trajectories differ only slightly.

use liec::problems::make_quadratic;
use liec::{simulate, Algorithm, CompressorSpec, Fidelity, RunSpec};

fn main() -> anyhow::Result<()> {
    let problem = make_quadratic(100, 8, 10.0, 1.0, 0)?;
    let mut finals = Vec::new();
    for fidelity in [Fidelity::Lossless, Fidelity::Wire] {
        let mut spec = RunSpec::new(Algorithm::Liec, 0.01, 2000, 3)
            .with_compressor(CompressorSpec::TopK { k: 10 })
            .with_period(10);
        spec.fidelity = fidelity;
        let run = simulate(&problem, &spec)?;
        let last = run.records.last().expect("at least one row");
        println!(
            "{fidelity:?}: final loss {:.6e}  uplink {} B  downlink {} B  avg {} B",
            last.loss, run.totals.uplink, run.totals.downlink, run.totals.model_average
        );
        finals.push(run.final_model);
    }
    let gap = finals[0].sub(&finals[1])?;
    println!("‖x_lossless − x_wire‖ = {:.3e}", liec::numerics::sq_norm(&gap).sqrt());
    Ok(())
}
