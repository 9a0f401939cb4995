//! Metrics CSV and its JSON manifest sidecar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pfbound::train::{MetricRecord, MetricsTrace};
use serde::Serialize;

pub const METRICS_HEADER: &str = "step,epoch,train_loss,test_loss,test_acc,lr,step_ms";
pub const MANIFEST_SCHEMA: u32 = 1;

/// Renders the trace with `\n` line endings and shortest round-trip floats.
pub fn metrics_csv(records: &[MetricRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step, r.epoch, r.train_loss, r.test_loss, r.test_acc, r.lr, r.step_ms
        )
        .unwrap();
    }
    out
}

/// `<out>.manifest.json`
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

#[derive(Debug, Clone, Serialize)]
pub struct DataInfo {
    pub source: String,
    pub fingerprint: String,
    pub n_train: usize,
    pub n_test: usize,
    pub input_dim: usize,
    pub n_classes: usize,
    pub scale: String,
    pub test_frac: f64,
    /// Rows dropped while reading a CSV (missing values).
    pub dropped_rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub method: String,
    pub rank: Option<usize>,
    pub eta0: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub schedule: String,
    pub eval_every: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceInfo {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub columns: Vec<&'static str>,
    pub code_version: &'static str,
    pub config: RunConfig,
    pub data: DataInfo,
    pub rows: usize,
    pub diverged: Option<DivergenceInfo>,
    pub final_train_loss: Option<f64>,
    pub final_test_acc: Option<f64>,
    /// Whether the CSV carries measured `step_ms`.
    pub timing_enabled: bool,
    /// Wall-clock fields vary between runs; everything above is deterministic.
    pub started_at_unix_ms: Option<u128>,
    pub wall_ms: Option<f64>,
}

impl RunManifest {
    pub fn new(config: RunConfig, data: DataInfo, trace: &MetricsTrace) -> Self {
        let last = trace.records.last();
        Self {
            schema_version: MANIFEST_SCHEMA,
            columns: METRICS_HEADER.split(',').collect(),
            code_version: env!("CARGO_PKG_VERSION"),
            config,
            data,
            rows: trace.records.len(),
            diverged: trace.diverged.as_ref().map(|d| DivergenceInfo {
                step: d.step,
                reason: d.reason.clone(),
            }),
            final_train_loss: last.map(|r| r.train_loss),
            final_test_acc: last.map(|r| r.test_acc),
            timing_enabled: false,
            started_at_unix_ms: None,
            wall_ms: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let r = MetricRecord {
            step: 3,
            epoch: 0.5,
            train_loss: 1.25,
            test_loss: 1.0,
            test_acc: 0.75,
            lr: 0.1,
            step_ms: 0.0,
        };
        let csv = metrics_csv(&[r]);
        assert_eq!(csv, format!("{METRICS_HEADER}\n3,0.5,1.25,1,0.75,0.1,0\n"));
        assert_eq!(
            manifest_path(Path::new("runs/a.csv")),
            PathBuf::from("runs/a.csv.manifest.json")
        );
    }
}
