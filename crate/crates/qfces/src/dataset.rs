//! Line-delimited dataset IO.
//!
//! A dataset file is UTF-8 NDJSON: one JSON object per line with keys
//! exactly matching the [`QueryInstance`] field names (snake_case). Blank
//! lines are ignored. Loading validates every instance; strict mode
//! aborts on the first violation, lenient mode drops offending instances
//! and reports them.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use qfces_core::catalog::{Dataset, InvariantViolation, QueryInstance};

/// One dropped instance in lenient mode: line number and reason.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct DroppedLine {
    pub line: usize,
    pub reason: String,
}

/// A loaded dataset plus lenient-mode drop accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub dropped: Vec<DroppedLine>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {source}")]
    Invalid {
        path: String,
        line: usize,
        source: InvariantViolation,
    },
    #[error("{path}:{line}: duplicate query_id {query_id}")]
    Duplicate {
        path: String,
        line: usize,
        query_id: String,
    },
}

/// Loads and validates a dataset file.
///
/// Strict mode fails on the first malformed line, invariant violation, or
/// duplicate `query_id` (with the line number). Lenient mode drops such
/// lines — keeping the first occurrence of a duplicated `query_id` — and
/// returns them in [`LoadOutcome::dropped`].
pub fn load_dataset(path: &Path, strict: bool) -> Result<LoadOutcome, DatasetError> {
    let display = path.display().to_string();
    let content = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })?;

    let mut instances: Vec<QueryInstance> = Vec::new();
    let mut dropped = Vec::new();

    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let instance: QueryInstance = match serde_json::from_str(raw) {
            Ok(inst) => inst,
            Err(err) => {
                if strict {
                    return Err(DatasetError::Malformed {
                        path: display,
                        line,
                        message: err.to_string(),
                    });
                }
                dropped.push(DroppedLine {
                    line,
                    reason: format!("malformed record: {err}"),
                });
                continue;
            }
        };
        if let Err(violation) = instance.validate() {
            if strict {
                return Err(DatasetError::Invalid {
                    path: display,
                    line,
                    source: violation,
                });
            }
            dropped.push(DroppedLine {
                line,
                reason: violation.to_string(),
            });
            continue;
        }
        if instances.iter().any(|i| i.query_id == instance.query_id) {
            if strict {
                return Err(DatasetError::Duplicate {
                    path: display,
                    line,
                    query_id: instance.query_id,
                });
            }
            dropped.push(DroppedLine {
                line,
                reason: format!("duplicate query_id {}", instance.query_id),
            });
            continue;
        }
        instances.push(instance);
    }

    Ok(LoadOutcome {
        dataset: Dataset::new(instances),
        dropped,
    })
}

/// Writes a dataset in the canonical NDJSON form: one instance per line,
/// in stored order, keys matching the type field names.
pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), DatasetError> {
    let display = path.display().to_string();
    let io_err = |source| DatasetError::Io {
        path: display.clone(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for instance in &dataset.instances {
        let json = serde_json::to_string(instance).expect("dataset instances serialize");
        out.write_all(json.as_bytes()).map_err(|source| DatasetError::Io {
            path: display.clone(),
            source,
        })?;
        out.write_all(b"\n").map_err(|source| DatasetError::Io {
            path: display.clone(),
            source,
        })?;
    }
    out.flush().map_err(|source| DatasetError::Io {
        path: display.clone(),
        source,
    })?;
    Ok(())
}
