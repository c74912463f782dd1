//! Run records, CSV emission, hashing and atomic persistence.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dscm_core::error::Result;
use dscm_core::nlc::ComplexityReport;
use dscm_core::rxdsp::MetricsReport;

/// FNV-1a over arbitrary bytes; the config/dataset fingerprint.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h = (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn hash_of<T: Serialize>(value: &T) -> String {
    format!("{:016x}", fnv1a64(serde_json::to_string(value).unwrap().as_bytes()))
}

/// Output root: `$DSCM_OUT` or `./out`.
pub fn out_root() -> PathBuf {
    std::env::var_os("DSCM_OUT").map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

/// Writes through a temp file and renames, so records are immutable once
/// they exist and never half-written.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config_hash: String,
    pub arch: String,
    pub block_n: usize,
    pub power_dbm: f64,
    pub metrics: Option<MetricsReport>,
    pub complexity: Option<ComplexityReport>,
    pub artifacts: Vec<String>,
    pub wall_clock_s: f64,
    /// Populated instead of metrics when the run was quarantined.
    pub error: Option<String>,
}

impl RunRecord {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.json", self.run_id));
        write_atomic(&path, serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(path)
    }
}

/// Metrics CSV header used everywhere tabular quality data is emitted.
pub fn metrics_csv_header(n_subcarriers: usize) -> String {
    let per_sc: Vec<String> = (0..n_subcarriers).map(|i| format!("q_sc{i}")).collect();
    format!(
        "run_id,power_dbm,arch,block_n,rmps,q_db,ber,evm_db,q_evm_db,{}",
        per_sc.join(",")
    )
}

pub fn metrics_csv_row(
    run_id: &str,
    power_dbm: f64,
    arch: &str,
    block_n: usize,
    rmps: f64,
    metrics: &MetricsReport,
) -> String {
    let agg = &metrics.aggregate;
    let per_sc: Vec<String> = metrics
        .per_subcarrier
        .iter()
        .map(|m| format!("{:.4}", m.q_db))
        .collect();
    format!(
        "{run_id},{power_dbm},{arch},{block_n},{rmps:.2},{:.4},{:.6e},{:.4},{:.4},{}",
        agg.q_db,
        agg.ber,
        agg.evm_db,
        agg.q_evm_db,
        per_sc.join(",")
    )
}

pub fn complexity_csv_header() -> &'static str {
    "arch,spec_hash,block_n,cnn_rm,lstm_rm,proj_rm,mlp_rm,rmps"
}

pub fn complexity_csv_row(arch: &str, spec_hash: &str, report: &ComplexityReport) -> String {
    format!(
        "{arch},{spec_hash},{},{:.2},{:.2},{:.2},{:.2},{:.2}",
        report.block_n, report.cnn_rm, report.lstm_rm, report.proj_rm, report.mlp_rm, report.rmps
    )
}

/// Upper performance envelope: rows sorted by cost, keeping only points
/// that improve the best quality seen so far.
pub fn pareto_envelope(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (cost, q) in sorted {
        if out.last().map_or(true, |&(_, best)| q > best) {
            out.push((cost, q));
        }
    }
    out
}
