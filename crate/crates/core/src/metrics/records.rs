use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{AttemptRow, MetricsError};
use crate::exec::Verdict;
use crate::strategy::Candidate;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// One judged candidate, as stored in `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub item_id: String,
    pub candidate: Candidate,
    pub verdict: Verdict,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RunRecord {
    pub fn attempt_row(&self) -> AttemptRow {
        let c = &self.candidate;
        AttemptRow {
            run_id: self.run_id.clone(),
            model: c.model.clone(),
            problem_id: c.task.problem_id.clone(),
            source_language: c.task.source_language,
            target_language: c.task.target_language,
            difficulty: c.task.difficulty,
            release_date: c.task.release_date,
            strategy: c.strategy,
            repeat_index: c.repeat_index,
            attempt_index: c.attempt_index,
            passed: self.verdict.passed,
        }
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

/// Parses one `records.jsonl` line, checking its schema version first.
pub(crate) fn parse_record(line: &str, path: &Path, lineno: usize) -> Result<RunRecord, MetricsError> {
    let parse_err = |e: serde_json::Error| MetricsError::Parse {
        path: path.display().to_string(),
        line: lineno,
        message: e.to_string(),
    };
    let probe: VersionProbe = serde_json::from_str(line).map_err(parse_err)?;
    if probe.schema_version != RECORD_SCHEMA_VERSION {
        return Err(MetricsError::SchemaMismatch {
            path: path.display().to_string(),
            line: lineno,
            found: probe.schema_version,
            expected: RECORD_SCHEMA_VERSION,
        });
    }
    serde_json::from_str(line).map_err(parse_err)
}

/// Reads every record of a `records.jsonl` file.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, MetricsError> {
    let io = |e: std::io::Error| MetricsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, path, i + 1)?);
    }
    Ok(out)
}

/// Appends records as JSON lines.
pub struct RecordWriter {
    out: BufWriter<File>,
}

impl RecordWriter {
    pub fn append(path: &Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &RunRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    /// Flushes to the OS; called at item boundaries.
    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}
