//! Run configuration: a single TOML file governing every command.
//!
//! The documented key list is the contract; unknown keys are rejected so
//! typos surface early. The configuration hash — SHA-256 over the raw
//! file bytes — is embedded in every output record and in default run
//! directory names, tying artifacts to the exact configuration that
//! produced them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use qfces_core::prompt::CesMode;
use qfces_core::request::SamplingParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default per-sample failure fraction above which `sample_n` errors.
pub const DEFAULT_MAX_FAILURE_FRACTION: f64 = 0.5;

/// Default validity threshold for judge score distributions.
pub const DEFAULT_VALIDITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub output: OutputSection,
    pub run: RunSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub templates: TemplatesSection,
    pub backends: BTreeMap<String, BackendConfig>,
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_output_dir(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Master seed: recorded in every output and used as the default seed
    /// for mock backends.
    pub seed: u64,
}

/// Decoding parameters for summary generation; defaults to the
/// generation preset of [`SamplingParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    #[serde(default = "gen_temperature")]
    pub temperature: f64,
    #[serde(default = "gen_top_k")]
    pub top_k: Option<u32>,
    #[serde(default = "gen_top_p")]
    pub top_p: Option<f64>,
    #[serde(default = "gen_num_beams")]
    pub num_beams: Option<u32>,
    #[serde(default = "gen_max_tokens")]
    pub max_tokens: u32,
}

fn gen_temperature() -> f64 {
    SamplingParams::generation().temperature
}
fn gen_top_k() -> Option<u32> {
    SamplingParams::generation().top_k
}
fn gen_top_p() -> Option<f64> {
    SamplingParams::generation().top_p
}
fn gen_num_beams() -> Option<u32> {
    SamplingParams::generation().num_beams
}
fn gen_max_tokens() -> u32 {
    SamplingParams::generation().max_tokens
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            temperature: gen_temperature(),
            top_k: gen_top_k(),
            top_p: gen_top_p(),
            num_beams: gen_num_beams(),
            max_tokens: gen_max_tokens(),
        }
    }
}

impl GenerationSection {
    pub fn params(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.temperature,
            top_k: self.top_k,
            top_p: self.top_p,
            num_beams: self.num_beams,
            max_tokens: self.max_tokens,
            n_samples: 1,
        }
    }
}

/// Judge-evaluation parameters; defaults to the evaluation preset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    #[serde(default = "eval_temperature")]
    pub temperature: f64,
    #[serde(default = "eval_max_tokens")]
    pub max_tokens: u32,
    /// Samples per dimension evaluation (the n of the weighted score).
    #[serde(default = "eval_n_samples")]
    pub n_samples: u32,
    /// Minimum fraction of valid scored samples per dimension.
    #[serde(default = "default_validity_threshold")]
    pub validity_threshold: f64,
}

fn eval_temperature() -> f64 {
    SamplingParams::evaluation().temperature
}
fn eval_max_tokens() -> u32 {
    SamplingParams::evaluation().max_tokens
}
fn eval_n_samples() -> u32 {
    SamplingParams::evaluation().n_samples
}
fn default_validity_threshold() -> f64 {
    DEFAULT_VALIDITY_THRESHOLD
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            temperature: eval_temperature(),
            max_tokens: eval_max_tokens(),
            n_samples: eval_n_samples(),
            validity_threshold: default_validity_threshold(),
        }
    }
}

impl EvaluationSection {
    pub fn params(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.temperature,
            top_k: None,
            top_p: None,
            num_beams: None,
            max_tokens: self.max_tokens,
            n_samples: self.n_samples,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplatesSection {
    /// Directory of `<template_id>.txt` files overriding the built-in
    /// prompt templates.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Model name sent on the wire and recorded in outputs.
    pub model: String,

    // HTTP fields.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token; unset = no auth.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub supports_top_k: bool,
    #[serde(default)]
    pub supports_num_beams: bool,
    /// Delays before each retry; length bounds the retry count.
    #[serde(default = "default_retry_backoff_ms")]
    pub retry_backoff_ms: Vec<u64>,
    /// Total attempts per request (first try included).
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_max_failure_fraction")]
    pub max_failure_fraction: f64,

    // Mock fields.
    /// Mock seed; defaults to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub base_latency_ms: f64,
    #[serde(default)]
    pub per_input_token_ms: f64,
    #[serde(default)]
    pub per_output_token_ms: f64,
    /// Canned responses keyed by request fingerprint; cycled per sample.
    #[serde(default)]
    pub responses: BTreeMap<String, Vec<String>>,
}

fn default_timeout_ms() -> u64 {
    120_000
}
fn default_max_concurrency() -> usize {
    8
}
fn default_retry_backoff_ms() -> Vec<u64> {
    vec![500, 1000, 2000]
}
fn default_max_attempts() -> u32 {
    3
}
fn default_max_failure_fraction() -> f64 {
    DEFAULT_MAX_FAILURE_FRACTION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    /// Backend used by gen-mos and gen-ces.
    pub backend: String,
    /// Backend used by judge; defaults to the generation backend.
    #[serde(default)]
    pub judge_backend: Option<String>,
    /// Comparative-summary mode judged and checked by default.
    #[serde(default = "default_mode")]
    pub mode: CesMode,
}

fn default_mode() -> CesMode {
    CesMode::Mos
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// Backend to benchmark; defaults to the pipeline backend.
    #[serde(default)]
    pub backend: Option<String>,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    /// Queries to benchmark; empty means every dataset query.
    #[serde(default)]
    pub query_ids: Vec<String>,
    /// Opinion-summary store to read from; defaults to the run's own.
    #[serde(default)]
    pub mos_store: Option<PathBuf>,
}

fn default_iterations() -> u32 {
    50
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            backend: None,
            iterations: default_iterations(),
            query_ids: Vec::new(),
            mos_store: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("config references undefined backend {backend_id} in {section}")]
    UnknownBackend { backend_id: String, section: String },
    #[error("backend {backend_id}: kind = \"http\" requires an endpoint")]
    MissingEndpoint { backend_id: String },
    #[error("backend {backend_id}: max_attempts must be >= 1")]
    ZeroAttempts { backend_id: String },
    #[error("{section}: {message}")]
    BadValue { section: String, message: String },
}

/// A parsed configuration plus the hash of the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Hex SHA-256 of the raw config file.
    pub config_hash: String,
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    /// Resolves a config-relative path against the config file location.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Short hash prefix used in default run identifiers.
    pub fn short_hash(&self) -> &str {
        &self.config_hash[..12]
    }
}

/// Reads, parses, and validates a config file.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let display = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| ConfigError::Io {
        path: display.clone(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let config: RunConfig = toml::from_str(&text).map_err(|err| ConfigError::Parse {
        path: display.clone(),
        message: err.to_string(),
    })?;
    validate(&config)?;

    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let config_hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();

    let base_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(LoadedConfig {
        config,
        config_hash,
        base_dir,
    })
}

fn validate(config: &RunConfig) -> Result<(), ConfigError> {
    let check_backend = |backend_id: &str, section: &str| {
        if config.backends.contains_key(backend_id) {
            Ok(())
        } else {
            Err(ConfigError::UnknownBackend {
                backend_id: backend_id.to_string(),
                section: section.to_string(),
            })
        }
    };
    check_backend(&config.pipeline.backend, "pipeline.backend")?;
    if let Some(judge) = &config.pipeline.judge_backend {
        check_backend(judge, "pipeline.judge_backend")?;
    }
    if let Some(bench) = &config.bench.backend {
        check_backend(bench, "bench.backend")?;
    }

    for (backend_id, backend) in &config.backends {
        if backend.kind == BackendKind::Http && backend.endpoint.is_none() {
            return Err(ConfigError::MissingEndpoint {
                backend_id: backend_id.clone(),
            });
        }
        if backend.max_attempts == 0 {
            return Err(ConfigError::ZeroAttempts {
                backend_id: backend_id.clone(),
            });
        }
        if !(0.0..=1.0).contains(&backend.max_failure_fraction) {
            return Err(ConfigError::BadValue {
                section: format!("backends.{backend_id}"),
                message: format!(
                    "max_failure_fraction {} outside [0, 1]",
                    backend.max_failure_fraction
                ),
            });
        }
    }

    let check_params = |params: SamplingParams, section: &str| {
        params.validate().map_err(|err| ConfigError::BadValue {
            section: section.to_string(),
            message: err.to_string(),
        })
    };
    check_params(config.generation.params(), "generation")?;
    check_params(config.evaluation.params(), "evaluation")?;
    if !(0.0..=1.0).contains(&config.evaluation.validity_threshold) {
        return Err(ConfigError::BadValue {
            section: "evaluation".to_string(),
            message: format!(
                "validity_threshold {} outside [0, 1]",
                config.evaluation.validity_threshold
            ),
        });
    }
    if config.bench.iterations == 0 {
        return Err(ConfigError::BadValue {
            section: "bench".to_string(),
            message: "iterations must be >= 1".to_string(),
        });
    }
    Ok(())
}

impl RunConfig {
    pub fn judge_backend_id(&self) -> &str {
        self.pipeline
            .judge_backend
            .as_deref()
            .unwrap_or(&self.pipeline.backend)
    }

    pub fn bench_backend_id(&self) -> &str {
        self.bench
            .backend
            .as_deref()
            .unwrap_or(&self.pipeline.backend)
    }
}
