//! Stage orchestration: each public method implements one command of the
//! pipeline, reading and writing only the documented files of one run
//! directory.
//!
//! Stages compose through the run directory: generation writes summary
//! stores, judging reads them and writes score records, reporting reads
//! scores and timings. A stage that needs an upstream artifact which is
//! missing fails with a validation error naming the file to produce
//! first. All stages are resumable — existing keyed records are kept and
//! only missing ones are generated — and rewrite their store sorted, so
//! identical inputs and seed give byte-identical files.

use std::fs;
use std::path::PathBuf;

use qfces_core::catalog::{compute_stats, Dataset, DatasetStats, QueryInstance, StatsError};
use qfces_core::ces::{check_format, FormatReport};
use qfces_core::judge::{JudgeError, ScoreRecord};
use qfces_core::metaeval::alpha::{agreement_report, AgreementReport, AlphaError, AlphaMetric};
use qfces_core::metaeval::annotation::{
    flag_discrepancies, merge_rounds, rater_tables, AnnotationError, AnnotationSet, FlagReport,
    RaterTable, RoundView,
};
use qfces_core::metaeval::summary::{summary_level_corr, CorrelationResult, SummaryError};
use qfces_core::prompt::{
    CesMode, CesProductInput, DimensionId, EvalContext, PromptError, TemplateSet,
};
use qfces_core::request::CompletionRequest;
use qfces_core::template::{PromptTemplate, TemplateError};
use serde::Serialize;

use crate::config::{ConfigError, LoadedConfig};
use crate::dataset::{self, DatasetError, DroppedLine};
use crate::gateway::{Gateway, GatewayError};
use crate::store::{
    generate_run_id, CesRecord, CesStore, JudgeRecord, JudgeStore, MosRecord, MosStore, RunDir,
    RunMeta, StoreError,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("missing store {path}: {hint}")]
    MissingStore { path: PathBuf, hint: String },
    #[error("no opinion summary for product {product_id} of query {query_id}; rerun gen-mos")]
    MissingSummary {
        query_id: String,
        product_id: String,
    },
    #[error("summary references query {query_id} which is not in the dataset")]
    UnknownQuery { query_id: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Alpha(#[from] AlphaError),
    #[error(transparent)]
    SummaryCorr(#[from] SummaryError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("{0}")]
    NothingToDo(String),
}

impl PipelineError {
    /// Process exit code: 2 for backend faults (transport failures or
    /// judges too unreliable to score), 1 for validation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Gateway(e) if e.is_backend_fault() => 2,
            PipelineError::Judge(
                JudgeError::TooManyInvalid { .. } | JudgeError::NoValidSamples,
            ) => 2,
            _ => 1,
        }
    }
}

/// Outcome of `ingest`.
#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub n_queries: usize,
    pub n_products: usize,
    pub n_dropped: usize,
    pub dropped: Vec<DroppedLine>,
}

/// Outcome of a generation stage.
#[derive(Debug, Clone, Serialize)]
pub struct GenReport {
    /// Records produced by this invocation.
    pub generated: usize,
    /// Records already present and kept (resume).
    pub reused: usize,
    /// Records in the store afterwards.
    pub total: usize,
}

/// One summary's format-check outcome.
#[derive(Debug, Clone, Serialize)]
pub struct FormatRow {
    pub query_id: String,
    pub passed: bool,
    pub failed_checks: Vec<String>,
}

/// Outcome of `check-format` over one mode's summaries.
#[derive(Debug, Clone, Serialize)]
pub struct FormatSummary {
    pub mode: CesMode,
    pub n_checked: usize,
    pub n_passed: usize,
    pub rows: Vec<FormatRow>,
}

/// Outcome of `judge`.
#[derive(Debug, Clone, Serialize)]
pub struct JudgeSummary {
    pub judged: usize,
    pub reused: usize,
    pub total: usize,
}

/// Outcome of `agreement`.
#[derive(Debug, Clone, Serialize)]
pub struct AgreementOutput {
    pub alpha: AgreementReport,
    /// Rank-correlation tables (post-discussion view), when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rater_tables: Option<Vec<RaterTable>>,
}

/// One run's orchestration context.
pub struct Pipeline {
    loaded: LoadedConfig,
    run_dir: RunDir,
    gateway: Gateway,
    templates: TemplateSet,
}

impl Pipeline {
    /// Opens (or creates) the run directory and builds the backends.
    ///
    /// Without an explicit run id, the most recent run of the same config
    /// is reused when one exists (recorded in `<output>/latest-run`), so
    /// consecutive commands compose; otherwise a fresh id is generated
    /// from the invocation time and the config hash.
    pub fn new(loaded: LoadedConfig, run_id: Option<String>) -> Result<Self, PipelineError> {
        let output_dir = loaded.resolve(&loaded.config.output.dir);
        let run_id = match run_id {
            Some(id) => id,
            None => resolve_default_run_id(&loaded, &output_dir),
        };
        let run_dir = RunDir::create(&output_dir, &run_id)?;
        // Remember this run for the next command; the pointer lives
        // outside the run directory so run trees stay comparable.
        let _ = fs::write(output_dir.join("latest-run"), format!("{run_id}\n"));
        let gateway = Gateway::from_config(&loaded.config)?;
        let templates = load_templates(&loaded)?;
        Ok(Pipeline {
            loaded,
            run_dir,
            gateway,
            templates,
        })
    }

    pub fn run_dir(&self) -> &RunDir {
        &self.run_dir
    }

    pub fn config(&self) -> &LoadedConfig {
        &self.loaded
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    fn config_hash(&self) -> &str {
        &self.loaded.config_hash
    }

    fn seed(&self) -> u64 {
        self.loaded.config.run.seed
    }

    /// Validates the configured dataset and writes its canonical copy into
    /// the run directory.
    pub fn ingest(&self, lenient: bool) -> Result<IngestReport, PipelineError> {
        let source = self.loaded.resolve(&self.loaded.config.dataset.path);
        let outcome = dataset::load_dataset(&source, !lenient)?;
        let report = IngestReport {
            n_queries: outcome.dataset.len(),
            n_products: outcome.dataset.total_products(),
            n_dropped: outcome.dropped.len(),
            dropped: outcome.dropped,
        };
        dataset::write_dataset(&self.run_dir.dataset_file(), &outcome.dataset)?;
        RunMeta {
            config_hash: self.config_hash().to_string(),
            seed: self.seed(),
            n_queries: report.n_queries,
            n_products: report.n_products,
            n_dropped: report.n_dropped,
        }
        .write(&self.run_dir.run_meta_file())?;
        Ok(report)
    }

    /// The run's dataset; ingests strictly first when this run has none yet.
    pub fn ensure_dataset(&self) -> Result<Dataset, PipelineError> {
        let path = self.run_dir.dataset_file();
        if !path.exists() {
            self.ingest(false)?;
        }
        Ok(dataset::load_dataset(&path, true)?.dataset)
    }

    /// Corpus statistics over the run's dataset.
    pub fn stats(&self) -> Result<DatasetStats, PipelineError> {
        Ok(compute_stats(&self.ensure_dataset()?)?)
    }

    /// Generates one opinion summary per (query, product); resumes over
    /// existing records.
    pub async fn gen_mos(&self) -> Result<GenReport, PipelineError> {
        let dataset = self.ensure_dataset()?;
        let path = self.run_dir.mos_file();
        let mut store = MosStore::load_or_empty(&path)?;
        store.ensure_config_hash(self.config_hash(), &path)?;

        let backend_id = &self.loaded.config.pipeline.backend;
        let model = self.gateway.model_name(backend_id)?.to_string();
        let params = self.loaded.config.generation.params();

        let reused = store.len();
        let mut generated = 0usize;
        for instance in &dataset.instances {
            for product in &instance.products {
                if store.contains(&instance.query_id, &product.product_id) {
                    continue;
                }
                let prompt = self.templates.render_mos_generation(product)?;
                let request = CompletionRequest {
                    system_message: prompt.system_message,
                    user_message: prompt.user_message,
                    params: params.clone(),
                    backend_id: backend_id.clone(),
                };
                let result = self.gateway.complete(&request).await?;
                store.insert(MosRecord {
                    config_hash: self.config_hash().to_string(),
                    seed: self.seed(),
                    query_id: instance.query_id.clone(),
                    product_id: product.product_id.clone(),
                    model: model.clone(),
                    text: result.text,
                });
                generated += 1;
            }
        }
        store.save(&path)?;
        Ok(GenReport {
            generated,
            reused,
            total: store.len(),
        })
    }

    /// Generates one comparative summary per query in the given mode;
    /// resumes over existing records.
    pub async fn gen_ces(&self, mode: CesMode) -> Result<GenReport, PipelineError> {
        let dataset = self.ensure_dataset()?;
        let mos_store = match mode {
            CesMode::Mos => Some(self.require_mos_store("gen-ces --mode mos needs opinion summaries; run gen-mos first")?),
            CesMode::Dia => None,
        };

        let path = self.run_dir.ces_file();
        let mut store = CesStore::load_or_empty(&path)?;
        let backend_id = &self.loaded.config.pipeline.backend;
        let model = self.gateway.model_name(backend_id)?.to_string();
        let params = self.loaded.config.generation.params();

        let reused = store.len();
        let mut generated = 0usize;
        for instance in &dataset.instances {
            if store.contains(&instance.query_id, mode) {
                continue;
            }
            let inputs = self.ces_inputs(instance, mode, mos_store.as_ref())?;
            let prompt = self
                .templates
                .render_ces_generation(&instance.query, &inputs, mode)?;
            let request = CompletionRequest {
                system_message: prompt.system_message,
                user_message: prompt.user_message,
                params: params.clone(),
                backend_id: backend_id.clone(),
            };
            let result = self.gateway.complete(&request).await?;
            store.insert(CesRecord {
                config_hash: self.config_hash().to_string(),
                seed: self.seed(),
                query_id: instance.query_id.clone(),
                mode,
                model: model.clone(),
                text: result.text,
            });
            generated += 1;
        }
        store.save(&path)?;
        Ok(GenReport {
            generated,
            reused,
            total: store.len(),
        })
    }

    /// Assembles the per-product prompt inputs for one query.
    pub(crate) fn ces_inputs(
        &self,
        instance: &QueryInstance,
        mode: CesMode,
        mos_store: Option<&MosStore>,
    ) -> Result<Vec<CesProductInput>, PipelineError> {
        let mut inputs = Vec::with_capacity(instance.products.len());
        for product in &instance.products {
            let opinion_summary = match (mode, mos_store) {
                (CesMode::Mos, Some(store)) => Some(
                    store
                        .get(&instance.query_id, &product.product_id)
                        .ok_or_else(|| PipelineError::MissingSummary {
                            query_id: instance.query_id.clone(),
                            product_id: product.product_id.clone(),
                        })?
                        .text
                        .clone(),
                ),
                _ => None,
            };
            inputs.push(CesProductInput {
                product: product.clone(),
                opinion_summary,
            });
        }
        Ok(inputs)
    }

    fn require_mos_store(&self, hint: &str) -> Result<MosStore, PipelineError> {
        let path = self.run_dir.mos_file();
        if !path.exists() {
            return Err(PipelineError::MissingStore {
                path,
                hint: hint.to_string(),
            });
        }
        Ok(MosStore::load(&path)?)
    }

    fn require_ces_store(&self, hint: &str) -> Result<CesStore, PipelineError> {
        let path = self.run_dir.ces_file();
        if !path.exists() {
            return Err(PipelineError::MissingStore {
                path,
                hint: hint.to_string(),
            });
        }
        Ok(CesStore::load(&path)?)
    }

    /// Runs the structural checks over one mode's comparative summaries
    /// and writes the outcome under `reports/`.
    pub fn check_format(&self, mode: CesMode) -> Result<FormatSummary, PipelineError> {
        let store =
            self.require_ces_store("check-format needs comparative summaries; run gen-ces first")?;
        let mut rows = Vec::new();
        let mut n_passed = 0usize;
        for record in store.records().filter(|r| r.mode == mode) {
            let report: FormatReport = check_format(&record.text);
            if report.passed_all {
                n_passed += 1;
            }
            rows.push(FormatRow {
                query_id: record.query_id.clone(),
                passed: report.passed_all,
                failed_checks: report
                    .failed_codes()
                    .iter()
                    .map(|c| c.as_str().to_string())
                    .collect(),
            });
        }
        if rows.is_empty() {
            return Err(PipelineError::NothingToDo(format!(
                "no {mode} summaries to check; run gen-ces --mode {mode} first"
            )));
        }
        let summary = FormatSummary {
            mode,
            n_checked: rows.len(),
            n_passed,
            rows,
        };
        let path = self
            .run_dir
            .reports_dir()
            .join(format!("format_{mode}.json"));
        write_pretty_json(&path, &summary)?;
        Ok(summary)
    }

    /// Scores summaries on the given dimensions with the judge backend.
    ///
    /// Comparative dimensions score the mode's comparative summaries;
    /// the per-product dimensions score the opinion summaries. Dimensions
    /// run sequentially, the n samples of one evaluation concurrently.
    pub async fn judge(
        &self,
        dimensions: &[DimensionId],
        mode: CesMode,
    ) -> Result<JudgeSummary, PipelineError> {
        let dataset = self.ensure_dataset()?;
        let path = self.run_dir.judge_file();
        let mut store = JudgeStore::load_or_empty(&path)?;

        let backend_id = self.loaded.config.judge_backend_id().to_string();
        let eval = &self.loaded.config.evaluation;
        let params = eval.params();
        let n = eval.n_samples;
        let threshold = eval.validity_threshold;

        let needs_ces = dimensions.iter().any(|d| d.is_comparative());
        let needs_mos = dimensions.iter().any(|d| !d.is_comparative());
        let ces_store = if needs_ces {
            Some(self.require_ces_store("judging comparative dimensions needs gen-ces outputs")?)
        } else {
            None
        };
        let mos_store = if needs_mos {
            Some(self.require_mos_store("judging opinion-summary dimensions needs gen-mos outputs")?)
        } else {
            None
        };

        let reused = store.len();
        let mut judged = 0usize;
        for &dimension in dimensions {
            if dimension.is_comparative() {
                let ces = ces_store.as_ref().expect("loaded above");
                let mut any = false;
                for record in ces.records().filter(|r| r.mode == mode) {
                    any = true;
                    let instance_id = ces_instance_id(&record.query_id, record.mode);
                    if store.contains(&instance_id, &record.model, dimension) {
                        continue;
                    }
                    let query = dataset.find(&record.query_id).ok_or_else(|| {
                        PipelineError::UnknownQuery {
                            query_id: record.query_id.clone(),
                        }
                    })?;
                    let context = EvalContext::for_comparison(&query.query, &query.products);
                    let score = self
                        .judge_one(
                            &backend_id,
                            &params,
                            n,
                            threshold,
                            dimension,
                            &instance_id,
                            &record.model,
                            &record.text,
                            &context,
                        )
                        .await?;
                    store.insert(JudgeRecord {
                        config_hash: self.config_hash().to_string(),
                        seed: self.seed(),
                        score,
                    });
                    store.save(&path)?;
                    judged += 1;
                }
                if !any {
                    return Err(PipelineError::NothingToDo(format!(
                        "no {mode} summaries to judge on {dimension}; run gen-ces --mode {mode} first"
                    )));
                }
            } else {
                let mos = mos_store.as_ref().expect("loaded above");
                for record in mos.records() {
                    let instance_id = mos_instance_id(&record.query_id, &record.product_id);
                    if store.contains(&instance_id, &record.model, dimension) {
                        continue;
                    }
                    let query = dataset.find(&record.query_id).ok_or_else(|| {
                        PipelineError::UnknownQuery {
                            query_id: record.query_id.clone(),
                        }
                    })?;
                    let product = query
                        .products
                        .iter()
                        .find(|p| p.product_id == record.product_id)
                        .ok_or_else(|| PipelineError::MissingSummary {
                            query_id: record.query_id.clone(),
                            product_id: record.product_id.clone(),
                        })?;
                    let context = EvalContext::for_product(product);
                    let score = self
                        .judge_one(
                            &backend_id,
                            &params,
                            n,
                            threshold,
                            dimension,
                            &instance_id,
                            &record.model,
                            &record.text,
                            &context,
                        )
                        .await?;
                    store.insert(JudgeRecord {
                        config_hash: self.config_hash().to_string(),
                        seed: self.seed(),
                        score,
                    });
                    store.save(&path)?;
                    judged += 1;
                }
            }
        }
        Ok(JudgeSummary {
            judged,
            reused,
            total: store.len(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    async fn judge_one(
        &self,
        backend_id: &str,
        params: &qfces_core::request::SamplingParams,
        n: u32,
        threshold: f64,
        dimension: DimensionId,
        instance_id: &str,
        model: &str,
        summary: &str,
        context: &EvalContext,
    ) -> Result<ScoreRecord, PipelineError> {
        let prompt = self
            .templates
            .render_evaluation(dimension, summary, context)?;
        let request = CompletionRequest {
            system_message: prompt.system_message,
            user_message: prompt.user_message,
            params: params.clone(),
            backend_id: backend_id.to_string(),
        };
        let outcomes = self.gateway.sample_n(&request, n).await?;
        let texts: Vec<Option<String>> = outcomes
            .into_iter()
            .map(|outcome| match outcome {
                Ok(result) => Some(result.text),
                Err(error) => {
                    log::warn!("{instance_id} {dimension}: sample failed: {error}");
                    None
                }
            })
            .collect();
        let distribution = qfces_core::judge::ScoreDistribution::from_responses(
            texts.iter().map(|t| t.as_deref()),
        );
        distribution.ensure_valid_fraction(dimension, threshold)?;
        Ok(ScoreRecord::new(
            instance_id,
            model,
            dimension,
            distribution,
            n,
        )?)
    }

    /// Correlates two external metric files at summary level.
    pub fn meta_eval(
        &self,
        metric_a: &std::path::Path,
        metric_b: &std::path::Path,
        iterations: u32,
    ) -> Result<CorrelationResult, PipelineError> {
        let a = crate::store::load_metric(metric_a)?;
        let b = crate::store::load_metric(metric_b)?;
        Ok(summary_level_corr(&a, &b, iterations, self.seed())?)
    }

    /// Inter-rater agreement over annotation files, optionally merging a
    /// re-annotation round and adding rank-correlation tables.
    pub fn agreement(
        &self,
        annotations: &std::path::Path,
        round2: Option<&std::path::Path>,
        metric: AlphaMetric,
        threshold: u8,
        with_tables: bool,
    ) -> Result<AgreementOutput, PipelineError> {
        let set = self.load_rounds(annotations, round2, threshold)?;
        let dimensions = annotated_dimensions(&set);
        if dimensions.is_empty() {
            return Err(PipelineError::NothingToDo(
                "annotation file contains no records".to_string(),
            ));
        }
        let alpha = agreement_report(&set, &dimensions, metric)?;
        let tables = if with_tables {
            Some(rater_tables(&set, &dimensions, RoundView::Round2)?)
        } else {
            None
        };
        Ok(AgreementOutput {
            alpha,
            rater_tables: tables,
        })
    }

    /// Screens round-1 annotations for items to re-score.
    pub fn flag_rounds(
        &self,
        annotations: &std::path::Path,
        threshold: u8,
    ) -> Result<FlagReport, PipelineError> {
        let records = crate::store::load_annotations(annotations)?;
        let set = AnnotationSet::new(records)?;
        Ok(flag_discrepancies(&set, threshold))
    }

    fn load_rounds(
        &self,
        annotations: &std::path::Path,
        round2: Option<&std::path::Path>,
        threshold: u8,
    ) -> Result<AnnotationSet, PipelineError> {
        let round1 = AnnotationSet::new(crate::store::load_annotations(annotations)?)?;
        match round2 {
            None => Ok(round1),
            Some(path) => {
                let round2 = AnnotationSet::new(crate::store::load_annotations(path)?)?;
                Ok(merge_rounds(&round1, &round2, threshold)?)
            }
        }
    }

    /// The judge store of this run, for reporting.
    pub fn judge_scores(&self) -> Result<Vec<ScoreRecord>, PipelineError> {
        let path = self.run_dir.judge_file();
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(JudgeStore::load(&path)?.scores())
    }
}

/// `ces:<query_id>:<mode>` — identifies a judged comparative summary.
pub fn ces_instance_id(query_id: &str, mode: CesMode) -> String {
    format!("ces:{query_id}:{mode}")
}

/// `mos:<query_id>:<product_id>` — identifies a judged opinion summary.
pub fn mos_instance_id(query_id: &str, product_id: &str) -> String {
    format!("mos:{query_id}:{product_id}")
}

/// The dimensions present in an annotation set, in canonical order.
fn annotated_dimensions(set: &AnnotationSet) -> Vec<DimensionId> {
    let present: std::collections::BTreeSet<DimensionId> =
        set.records().iter().map(|r| r.dimension).collect();
    DimensionId::all()
        .into_iter()
        .filter(|d| present.contains(d))
        .collect()
}

/// Serializes a report object as pretty JSON with a trailing newline.
pub fn write_pretty_json<T: Serialize>(
    path: &std::path::Path,
    value: &T,
) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| StoreError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    let mut body = serde_json::to_vec_pretty(value).map_err(|e| StoreError::Malformed {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    body.push(b'\n');
    fs::write(path, body).map_err(|e| StoreError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Reuses the latest run of this config when one exists.
fn resolve_default_run_id(loaded: &LoadedConfig, output_dir: &std::path::Path) -> String {
    if let Ok(pointer) = fs::read_to_string(output_dir.join("latest-run")) {
        let existing = pointer.trim();
        if !existing.is_empty() && output_dir.join(existing).is_dir() {
            let meta_path = output_dir.join(existing).join("dataset/run.json");
            let same_config = match RunMeta::read(&meta_path) {
                Ok(meta) => meta.config_hash == loaded.config_hash,
                // No dataset yet: trust the hash suffix of generated ids.
                Err(_) => existing.ends_with(&format!("-{}", loaded.short_hash())),
            };
            if same_config {
                return existing.to_string();
            }
        }
    }
    generate_run_id(loaded.short_hash())
}

/// Starts from the built-in templates and overlays any `*.txt` files in
/// the configured template directory (file stem = template id).
fn load_templates(loaded: &LoadedConfig) -> Result<TemplateSet, PipelineError> {
    let mut templates = TemplateSet::default();
    if let Some(dir) = &loaded.config.templates.dir {
        let dir = loaded.resolve(dir);
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| StoreError::Io {
                path: dir.display().to_string(),
                source: e,
            })?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        entries.sort();
        for path in entries {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let raw = fs::read_to_string(&path).map_err(|e| StoreError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            templates.set(PromptTemplate::parse(&id, &raw));
        }
    }
    Ok(templates)
}
