//! Metric CSV files. The first line is a schema comment; the rest is a
//! plain CSV table with a header row.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError};
use searchassist_core::a3c::{MetricRow, SweepResult};

pub const METRICS_SCHEMA: &str = "# searchassist-metrics v1";
pub const SUMMARY_SCHEMA: &str = "# searchassist-sweep-summary v1";

fn writer(path: &Path, schema: &str) -> Result<csv::Writer<File>, CliError> {
    let mut f = File::create(path).map_err(io_err(path))?;
    writeln!(f, "{schema}").map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(f))
}

/// Streams validation rows to a CSV file.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        Ok(Self { inner: writer(path, METRICS_SCHEMA)? })
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<(), CliError> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush().map_err(|e| CliError::Data(e.to_string()))
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, schema: &str) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    if text.lines().next() != Some(schema) {
        return Err(CliError::Data(format!("{}: expected schema line `{schema}`", path.display())));
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    rdr.deserialize().map(|r| r.map_err(CliError::from)).collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>, CliError> {
    read_rows(path, METRICS_SCHEMA)
}

/// One sweep cell's post-warmup statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub gamma: f64,
    pub hidden: usize,
    pub encoding: String,
    pub seed: u64,
    pub count: usize,
    pub reward_mean: f64,
    pub reward_variance: f64,
    pub mean_state_value: f64,
    pub completion_rate: f64,
}

impl From<&SweepResult> for SummaryRow {
    fn from(r: &SweepResult) -> Self {
        let encoding = serde_json::to_value(r.cell.encoding).ok().and_then(|v| v.as_str().map(str::to_string));
        Self {
            gamma: r.cell.gamma,
            hidden: r.cell.hidden,
            encoding: encoding.unwrap_or_default(),
            seed: r.cell.seed,
            count: r.window.count,
            reward_mean: r.window.reward_mean,
            reward_variance: r.window.reward_variance,
            mean_state_value: r.window.mean_state_value,
            completion_rate: r.window.completion_rate,
        }
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = writer(path, SUMMARY_SCHEMA)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    read_rows(path, SUMMARY_SCHEMA)
}
