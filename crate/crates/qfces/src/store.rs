//! Run directories and the newline-delimited JSON stores inside them.
//!
//! Every pipeline invocation works inside `out/<run-id>/`, which holds one
//! subdirectory per stage. Files within a run are deterministic: records
//! are keyed, sorted, and rewritten in full, and they carry the config
//! hash and seed instead of timestamps or run ids, so two runs from the
//! same config and inputs produce byte-identical trees.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use qfces_core::judge::ScoreRecord;
use qfces_core::metaeval::annotation::RatingRecord;
use qfces_core::metaeval::summary::MetricMap;
use qfces_core::prompt::CesMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("cannot access {path}: {source}")]
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
    #[error("{path}: {message}")]
    Inconsistent { path: String, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads an NDJSON file into records, with 1-based line numbers in errors.
/// Blank lines are ignored.
pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut records = Vec::new();
    for (index, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: index + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes records as NDJSON, one canonical JSON object per line.
pub fn write_ndjson<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut buffer = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buffer, record).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        buffer.push(b'\n');
    }
    fs::write(path, buffer).map_err(|e| io_err(path, e))
}

/// Appends one record to an NDJSON file, flushing before returning so the
/// line survives an interrupted process.
pub fn append_ndjson_line<T: Serialize>(path: &Path, record: &T) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut line = serde_json::to_vec(record).map_err(|e| StoreError::Malformed {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    line.push(b'\n');
    file.write_all(&line).map_err(|e| io_err(path, e))?;
    file.flush().map_err(|e| io_err(path, e))
}

/// The directory tree of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Opens (creating if needed) `<output_dir>/<run_id>` and its stage
    /// subdirectories.
    pub fn create(output_dir: &Path, run_id: &str) -> Result<Self, StoreError> {
        let root = output_dir.join(run_id);
        for sub in ["dataset", "mos", "ces", "judge", "reports", "bench"] {
            let dir = root.join(sub);
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        Ok(RunDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset_file(&self) -> PathBuf {
        self.root.join("dataset/queries.ndjson")
    }

    pub fn run_meta_file(&self) -> PathBuf {
        self.root.join("dataset/run.json")
    }

    pub fn mos_file(&self) -> PathBuf {
        self.root.join("mos/summaries.ndjson")
    }

    pub fn ces_file(&self) -> PathBuf {
        self.root.join("ces/summaries.ndjson")
    }

    pub fn judge_file(&self) -> PathBuf {
        self.root.join("judge/scores.ndjson")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn bench_log_file(&self) -> PathBuf {
        self.root.join("bench/timings.ndjson")
    }

    pub fn bench_marker_file(&self) -> PathBuf {
        self.root.join("bench/incomplete.marker")
    }
}

/// A run id built from the invocation time and the config hash. The id
/// appears only in the directory name, never inside output files.
pub fn generate_run_id(config_short_hash: &str) -> String {
    let seconds = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("{seconds}-{config_short_hash}")
}

/// Sidecar metadata written next to the run's dataset copy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    pub n_queries: usize,
    pub n_products: usize,
    /// Lines dropped by lenient ingestion (0 under strict).
    pub n_dropped: usize,
}

impl RunMeta {
    pub fn write(&self, path: &Path) -> Result<(), StoreError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        let mut body = serde_json::to_vec_pretty(self).expect("meta serializes");
        body.push(b'\n');
        fs::write(path, body).map_err(|e| io_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, StoreError> {
        let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&raw).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })
    }
}

/// One generated opinion summary for one product of one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MosRecord {
    pub config_hash: String,
    pub seed: u64,
    pub query_id: String,
    pub product_id: String,
    pub model: String,
    pub text: String,
}

/// One generated comparative summary for one query in one mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CesRecord {
    pub config_hash: String,
    pub seed: u64,
    pub query_id: String,
    pub mode: CesMode,
    pub model: String,
    pub text: String,
}

/// One judged (summary, dimension) score with run provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeRecord {
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub score: ScoreRecord,
}

/// Keyed store of opinion summaries; key is (query_id, product_id).
#[derive(Debug, Default)]
pub struct MosStore {
    records: BTreeMap<(String, String), MosRecord>,
}

impl MosStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let mut store = Self::new();
        for record in read_ndjson::<MosRecord>(path)? {
            store.insert(record);
        }
        Ok(store)
    }

    /// Loads the store when the file exists, otherwise starts empty.
    pub fn load_or_empty(path: &Path) -> Result<Self, StoreError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn insert(&mut self, record: MosRecord) {
        self.records
            .insert((record.query_id.clone(), record.product_id.clone()), record);
    }

    pub fn get(&self, query_id: &str, product_id: &str) -> Option<&MosRecord> {
        self.records
            .get(&(query_id.to_string(), product_id.to_string()))
    }

    pub fn contains(&self, query_id: &str, product_id: &str) -> bool {
        self.get(query_id, product_id).is_some()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &MosRecord> {
        self.records.values()
    }

    /// Rewrites the whole store sorted by key.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let records: Vec<&MosRecord> = self.records.values().collect();
        write_ndjson(path, &records)
    }

    /// Errors when any record was produced under a different config.
    pub fn ensure_config_hash(&self, expected: &str, path: &Path) -> Result<(), StoreError> {
        for record in self.records.values() {
            if record.config_hash != expected {
                return Err(StoreError::Inconsistent {
                    path: path.display().to_string(),
                    message: format!(
                        "record for ({}, {}) was produced under config {} but this run uses {}",
                        record.query_id, record.product_id, record.config_hash, expected
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Keyed store of comparative summaries; key is (query_id, mode).
#[derive(Debug, Default)]
pub struct CesStore {
    records: BTreeMap<(String, &'static str), CesRecord>,
}

impl CesStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let mut store = Self::new();
        for record in read_ndjson::<CesRecord>(path)? {
            store.insert(record);
        }
        Ok(store)
    }

    pub fn load_or_empty(path: &Path) -> Result<Self, StoreError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn insert(&mut self, record: CesRecord) {
        self.records
            .insert((record.query_id.clone(), record.mode.as_str()), record);
    }

    pub fn get(&self, query_id: &str, mode: CesMode) -> Option<&CesRecord> {
        self.records.get(&(query_id.to_string(), mode.as_str()))
    }

    pub fn contains(&self, query_id: &str, mode: CesMode) -> bool {
        self.get(query_id, mode).is_some()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &CesRecord> {
        self.records.values()
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let records: Vec<&CesRecord> = self.records.values().collect();
        write_ndjson(path, &records)
    }
}

/// Keyed store of judge scores; key is (instance_id, model, dimension).
#[derive(Debug, Default)]
pub struct JudgeStore {
    records: BTreeMap<(String, String, &'static str), JudgeRecord>,
}

impl JudgeStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let mut store = Self::new();
        for record in read_ndjson::<JudgeRecord>(path)? {
            store.insert(record);
        }
        Ok(store)
    }

    pub fn load_or_empty(path: &Path) -> Result<Self, StoreError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::new())
        }
    }

    pub fn insert(&mut self, record: JudgeRecord) {
        let key = (
            record.score.instance_id.clone(),
            record.score.model.clone(),
            record.score.dimension.as_str(),
        );
        self.records.insert(key, record);
    }

    pub fn contains(
        &self,
        instance_id: &str,
        model: &str,
        dimension: qfces_core::prompt::DimensionId,
    ) -> bool {
        self.records.contains_key(&(
            instance_id.to_string(),
            model.to_string(),
            dimension.as_str(),
        ))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &JudgeRecord> {
        self.records.values()
    }

    pub fn scores(&self) -> Vec<ScoreRecord> {
        self.records.values().map(|r| r.score.clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let records: Vec<&JudgeRecord> = self.records.values().collect();
        write_ndjson(path, &records)
    }
}

/// One line of a metric file: a score for one summary of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub query_id: String,
    pub summary_id: String,
    pub score: f64,
}

/// Loads a metric NDJSON file into the map keyed by (query, summary).
/// Duplicate keys are an error: a metric scores each summary once.
pub fn load_metric(path: &Path) -> Result<MetricMap, StoreError> {
    let mut map = MetricMap::new();
    for (index, entry) in read_ndjson::<MetricEntry>(path)?.into_iter().enumerate() {
        let key = (entry.query_id, entry.summary_id);
        if map.insert(key.clone(), entry.score).is_some() {
            return Err(StoreError::Malformed {
                path: path.display().to_string(),
                line: index + 1,
                message: format!("duplicate score for ({}, {})", key.0, key.1),
            });
        }
    }
    Ok(map)
}

/// Loads human rating records from an annotations NDJSON file.
pub fn load_annotations(path: &Path) -> Result<Vec<RatingRecord>, StoreError> {
    read_ndjson(path)
}
