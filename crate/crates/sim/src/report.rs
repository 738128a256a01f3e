//! Report schema and serialization.

use std::io::Write;
use std::path::Path;

use qsdc_core::protocol::SessionReport;
use qsdc_core::stats::Estimate;
use qsdc_core::Scheme;
use serde::Serialize;

use crate::error::{Result, SimError};
use crate::spec::{ExperimentSpec, Format, Mode};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub mode: Mode,
    pub seed: u64,
    pub seed_generated: bool,
    pub wall_clock_secs: f64,
    pub spec: ExperimentSpec,
    pub result: Outcome,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    Run(RunSummary),
    AttackSweep { rows: Vec<SweepRow> },
    FamilyVerify(FamilyCheck),
    LeakageTable { scheme: Scheme, rows: Vec<LeakageRow> },
}

/// One session of `run`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub index: usize,
    pub seed: u64,
    pub aborted: bool,
    pub abort_stage: Option<String>,
    pub batches: usize,
    pub delivered: usize,
    pub delivered_bits: f64,
    pub checked_positions: u64,
    pub mismatches: u64,
    pub message_errors: usize,
    pub corrupted_positions: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialDetail {
    #[serde(flatten)]
    pub row: TrialRow,
    pub session: SessionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub trials: usize,
    pub aborted: usize,
    pub abort_rate: Estimate,
    /// Mean over all non-skipped checks of the per-check mismatch rate.
    pub check_mismatch_rate: Estimate,
    /// Mismatches over all checked positions, pooled.
    pub position_mismatch_rate: Estimate,
    pub z_mismatch_rate: Estimate,
    pub x_mismatch_rate: Estimate,
    /// Delivered bits per session.
    pub delivered_bits: Estimate,
    pub delivered_bits_total: f64,
    pub message_errors: usize,
    pub corrupted_positions: usize,
    /// Mutual information (bits per multiplet) between Eve's records and the message.
    pub eve_information: Estimate,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_trial: Vec<TrialDetail>,
    #[serde(skip)]
    pub rows: Vec<TrialRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub attack: String,
    pub parameter: String,
    /// Mismatch probability of a checked position, both bases pooled.
    pub detection_rate: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
    pub z_mismatch_rate: f64,
    pub z_stderr: f64,
    pub x_mismatch_rate: f64,
    pub x_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyCheck {
    pub scheme: Scheme,
    pub members: usize,
    pub expected_members: usize,
    pub max_off_diagonal: f64,
    pub max_diagonal_defect: f64,
    pub orthonormal: bool,
    /// Every message maps to a distinct member and decodes back to itself.
    pub bijective: bool,
    pub round_trip_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageRow {
    pub particles: String,
    pub size: usize,
    pub bits: f64,
}

fn encode_err(e: impl std::fmt::Display) -> SimError {
    SimError::Encode(e.to_string())
}

fn csv_rows<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(encode_err)?;
    }
    let bytes = w.into_inner().map_err(encode_err)?;
    String::from_utf8(bytes).map_err(encode_err)
}

/// Report body in the requested format. CSV carries the table of the mode
/// (per-trial rows for `run`).
pub fn render(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => serde_json::to_string_pretty(report).map(|s| s + "\n").map_err(encode_err),
        Format::Csv => match &report.result {
            Outcome::Run(s) => csv_rows(&s.rows),
            Outcome::AttackSweep { rows } => csv_rows(rows),
            Outcome::FamilyVerify(f) => csv_rows(std::slice::from_ref(f)),
            Outcome::LeakageTable { rows, .. } => csv_rows(rows),
        },
    }
}

/// Writes `body` to `path` through a sibling temporary file and a rename, so a
/// failed write never leaves a partial report behind.
pub fn write_atomic(path: &Path, body: &str) -> Result<()> {
    let io = |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(body.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
