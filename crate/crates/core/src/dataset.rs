//! Line-delimited dataset files: one JSON object per line, each carrying a
//! schema_version field. Writes are atomic (temp file then rename).

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {0}: {1}")]
    Malformed(usize, serde_json::Error),
    #[error("line {0}: unsupported schema_version {1}")]
    SchemaVersion(usize, u32),
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

/// One training example emitted for an external trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub prompt: String,
    pub target: String,
}

/// Write items as versioned JSON lines; returns the number of lines.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<usize, DatasetError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
        for item in items {
            let line = serde_json::to_string(&Versioned {
                schema_version: SCHEMA_VERSION,
                body: item,
            })
            .map_err(|e| DatasetError::Malformed(0, e))?;
            writeln!(f, "{line}")?;
        }
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(items.len())
}

/// Read versioned JSON lines; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Versioned<T> =
            serde_json::from_str(&line).map_err(|e| DatasetError::Malformed(i + 1, e))?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(DatasetError::SchemaVersion(i + 1, v.schema_version));
        }
        out.push(v.body);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Label, PreferenceRecord};

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let records = vec![
            PreferenceRecord::labeled("q1", "a", "b", Label::A),
            PreferenceRecord::unlabeled("q2", "a", "b"),
        ];
        assert_eq!(write_jsonl(&path, &records).unwrap(), 2);
        let back: Vec<PreferenceRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.contains("\"schema_version\":1")));
    }

    #[test]
    fn empty_write_creates_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        assert_eq!(write_jsonl::<PreferenceRecord>(&path, &[]).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"schema_version\":1,\"prompt\":\"p\",\"target\":\"t\"}\nnot json\n").unwrap();
        match read_jsonl::<TrainingExample>(&path) {
            Err(DatasetError::Malformed(2, _)) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }
}
