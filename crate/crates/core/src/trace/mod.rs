//! Deployment traces: per-attempt records, ingest with line diagnostics,
//! aggregate summaries and rendered reports.

mod report;
mod summary;
pub mod synth;

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{ExitStatus, FailureCategory, Outcome};

pub use report::{render, ReportFormat, RenderedReport, PANELS};
pub use summary::{
    language_breakdown, nearest_rank, summarize, CategoryCount, CorpusSummary, LanguageRow, Percentiles, TierRow,
    DEFAULT_MIN_COUNT,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttemptRecord {
    pub schema_version: u32,
    pub tool_id: String,
    pub repo_url: String,
    pub primary_language: String,
    pub artifact_count: u32,
    pub outcome: Outcome,
    pub failure_category: Option<FailureCategory>,
    pub build_duration_s: f64,
    /// Exit status of the validation command; null when validation never ran.
    pub validation_exit: Option<ExitStatus>,
    pub rounds_used: u32,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
}

impl AttemptRecord {
    pub fn check(&self) -> Result<(), String> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.tool_id.is_empty() {
            return Err("empty tool_id".into());
        }
        match (self.outcome, self.failure_category) {
            (Outcome::Failure, None) => return Err("outcome is failure but failure_category is missing".into()),
            (Outcome::Success, Some(c)) => {
                return Err(format!("outcome is success but failure_category is {c}"));
            }
            _ => {}
        }
        if !(self.build_duration_s.is_finite() && self.build_duration_s >= 0.0) {
            return Err(format!("build_duration_s must be finite and >= 0, got {}", self.build_duration_s));
        }
        if self.ended_at < self.started_at {
            return Err("ended_at precedes started_at".into());
        }
        Ok(())
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Default)]
pub struct Ingested {
    pub records: Vec<AttemptRecord>,
    pub errors: Vec<LineError>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot summarize an empty trace")]
    Empty,
    #[error("unknown report format {0:?} (expected text, json or csv)")]
    UnknownFormat(String),
}

/// Parses JSON lines, keeping valid records and collecting per-line errors.
pub fn ingest_reader<R: Read>(r: R) -> Result<Ingested, std::io::Error> {
    let mut out = Ingested::default();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AttemptRecord>(&line) {
            Ok(rec) => match rec.check() {
                Ok(()) => out.records.push(rec),
                Err(msg) => out.errors.push(LineError { line: n, msg }),
            },
            Err(e) => out.errors.push(LineError { line: n, msg: e.to_string() }),
        }
    }
    Ok(out)
}

pub fn ingest(path: &Path) -> Result<Ingested, TraceError> {
    let f = File::open(path).map_err(|source| TraceError::Io { path: path.into(), source })?;
    ingest_reader(f).map_err(|source| TraceError::Io { path: path.into(), source })
}

/// Appends records to a trace file, flushing after each one.
#[derive(Debug)]
pub struct TraceWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn append(path: &Path) -> Result<Self, TraceError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| TraceError::Io { path: dir.into(), source })?;
        }
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| TraceError::Io { path: path.into(), source })?;
        Ok(TraceWriter { path: path.into(), out: BufWriter::new(f) })
    }

    pub fn write(&mut self, rec: &AttemptRecord) -> Result<(), TraceError> {
        let io = |source| TraceError::Io { path: self.path.clone(), source };
        writeln!(self.out, "{}", rec.to_line()).map_err(io)?;
        self.out.flush().map_err(|source| TraceError::Io { path: self.path.clone(), source })
    }
}
