//! Runs the invariant contract suite, then repeats it with the error bound
//! evaluated at a deliberately optimistic δ to show the check can fail.

use liec::experiment::{run_contract_suite, ContractOptions};

fn main() -> anyhow::Result<()> {
    for (label, error_bound_delta) in [("honest δ", None), ("δ = 1 (negative control)", Some(1.0))] {
        let report = run_contract_suite(&ContractOptions {
            error_bound_delta,
            ..ContractOptions::default()
        })?;
        println!("{label}: {}", if report.passed() { "all pass" } else { "FAILURES" });
        for c in &report.entries {
            println!(
                "  {:<5} {:<26} observed {:.3e}  bound {:.3e}",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.observed,
                c.bound
            );
        }
    }
    Ok(())
}
