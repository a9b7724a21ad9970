//! Per-iteration records, the metrics CSV and run summaries.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order of `metrics.csv`.
pub const CSV_HEADER: [&str; 9] = [
    "t",
    "loss",
    "grad_sq",
    "err_sq",
    "disagreement",
    "uplink_bytes",
    "downlink_bytes",
    "avg_bytes",
    "round_ms",
];

/// One row of the metrics CSV.
///
/// State columns describe the iterate *entering* round `t`; byte columns
/// count the frames exchanged *during* round `t`. A run of `T` rounds
/// emits rows `0..=T`, the last one holding the final state and no traffic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    /// `f(x̄_t)`, or `f(x̄_t) − f*` when the optimum is known.
    pub loss: f64,
    /// `‖∇f(x̄_t)‖²`.
    pub grad_sq: f64,
    /// Squared norm of the algorithm's error variable.
    pub err_sq: f64,
    /// `(1/N) Σ_i ‖x̄_t − x_t^i‖²`.
    pub disagreement: f64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    /// Model parameters exchanged on synchronization rounds.
    pub avg_bytes: u64,
    pub round_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub rows: usize,
    pub final_loss: Option<f64>,
    pub min_grad_sq: Option<f64>,
    pub peak_err_sq: Option<f64>,
    pub total_uplink_bytes: u64,
    pub total_downlink_bytes: u64,
    pub total_avg_bytes: u64,
}

pub fn summarize(records: &[IterationRecord]) -> MetricsSummary {
    let fold = |f: fn(&IterationRecord) -> f64, pick: fn(f64, f64) -> f64| {
        records.iter().map(f).reduce(pick)
    };
    MetricsSummary {
        rows: records.len(),
        final_loss: records.last().map(|r| r.loss),
        min_grad_sq: fold(|r| r.grad_sq, f64::min),
        peak_err_sq: fold(|r| r.err_sq, f64::max),
        total_uplink_bytes: records.iter().map(|r| r.uplink_bytes).sum(),
        total_downlink_bytes: records.iter().map(|r| r.downlink_bytes).sum(),
        total_avg_bytes: records.iter().map(|r| r.avg_bytes).sum(),
    }
}

/// Serializes records as CSV (header always present).
pub fn write_csv<W: Write>(records: &[IterationRecord], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> std::result::Result<Vec<IterationRecord>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Writes `metrics.csv` to `path` and returns the summary of the rows.
pub fn metrics_flush(records: &[IterationRecord], path: &Path) -> Result<MetricsSummary> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(records, std::io::BufWriter::new(file)).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(summarize(records))
}

/// Re-reads a metrics CSV written by [`metrics_flush`].
pub fn load_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}
