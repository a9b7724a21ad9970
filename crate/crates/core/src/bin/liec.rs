use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use liec::experiment::{
    measure_delta_report, run_contract_suite, run_experiment, run_speedup_sweep, ContractOptions,
    ExperimentConfig,
};
use liec::{CompressorSpec, Fidelity};

/// Exit status when a run violates an invariant (or a sweep disagrees).
const INVARIANT_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(version, about = "Compressed distributed SGD simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Channel fidelity: lossless or wire (overrides the config).
    #[arg(long)]
    fidelity: Option<Fidelity>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and write metrics and summaries.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Sweep worker counts with η ∝ N and T ∝ 1/N.
    Sweep {
        config: PathBuf,
        /// Comma-separated worker counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        workers: Vec<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the invariant contract suite and print a JSON report.
    Contracts {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to <out>/contracts.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// δ assumed by the error-bound check (negative control).
        #[arg(long)]
        error_bound_delta: Option<f64>,
    },
    /// Estimate a compressor's contraction parameter on Gaussian inputs.
    MeasureDelta {
        /// e.g. `random-k:250`, `top-k:10`, `sign`, `blockwise-sign:10`.
        spec: CompressorSpec,
        #[arg(long, default_value_t = 1000)]
        dim: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: &PathBuf, o: Overrides) -> Result<ExperimentConfig> {
    let mut config =
        ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = o.seed {
        config.seed = seed;
    }
    if let Some(out) = o.out {
        config.out = out;
    }
    if let Some(fidelity) = o.fidelity {
        config.fidelity = fidelity;
    }
    Ok(config)
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, overrides } => {
            let config = load(&config, overrides)?;
            let outcome = run_experiment(&config)?;
            for a in &outcome.summary.algorithms {
                println!(
                    "{:<15} final loss {:.6e}  uplink {:.0} B  downlink {:.0} B  avg {:.0} B",
                    a.algorithm.name(),
                    a.final_loss.mean,
                    a.total_uplink_bytes.mean,
                    a.total_downlink_bytes.mean,
                    a.total_avg_bytes.mean,
                );
            }
            for f in &outcome.summary.invariant_failures {
                eprintln!("invariant failure: {f}");
            }
            println!("wrote {}", config.out.display());
            Ok(outcome.summary.invariant_failures.is_empty())
        }
        Command::Sweep {
            config,
            workers,
            overrides,
        } => {
            let config = load(&config, overrides)?;
            let report = run_speedup_sweep(&config, &workers)?;
            for s in &report.series {
                println!("{}", s.algorithm);
                println!("  {:>4} {:>10} {:>8} {:>14} {:>10}", "N", "eta", "T", "tail loss", "wall ms");
                for r in &s.rows {
                    println!(
                        "  {:>4} {:>10.4e} {:>8} {:>14.6e} {:>10.1}",
                        r.workers, r.eta, r.iterations, r.tail_loss, r.wall_ms
                    );
                }
                if let (Some(spread), Some(agree)) = (s.relative_spread, s.agree) {
                    let verdict = if agree { "agree" } else { "DISAGREE" };
                    println!("  relative spread {spread:.3} (tolerance {}): {verdict}", report.tolerance);
                }
            }
            Ok(report.all_agree())
        }
        Command::Contracts {
            seed,
            out,
            error_bound_delta,
        } => {
            let report = run_contract_suite(&ContractOptions {
                seed,
                error_bound_delta,
                ..ContractOptions::default()
            })?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join("contracts.json");
                std::fs::write(&path, format!("{json}\n"))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            println!("{json}");
            Ok(report.passed())
        }
        Command::MeasureDelta {
            spec,
            dim,
            samples,
            seed,
        } => {
            let report = measure_delta_report(spec, dim, samples, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors are configuration errors (exit 1); exit 2 is reserved
    // for invariant failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(INVARIANT_FAILURE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
