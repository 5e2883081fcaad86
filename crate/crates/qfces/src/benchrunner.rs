//! Latency benchmark: comparative-summary generation from opinion
//! summaries versus from raw product data.
//!
//! For every benchmarked query the runner renders both prompt variants,
//! then times `iterations` completions of each against the same backend.
//! Runs are strictly sequential — concurrent requests would contaminate
//! the latency measurements — and only the completion call sits inside
//! the timer; prompt rendering and file writes happen outside it.
//!
//! Every timing lands in an append-only log line before the next request
//! starts. An incomplete-run marker stays in place until the full grid of
//! (query, mode, iteration) cells is measured, so an interrupted bench
//! resumes where it stopped instead of re-measuring.

use std::collections::BTreeSet;
use std::time::Instant;

use qfces_core::bench::{build_report, BenchError, BenchReport, TimingRecord};
use qfces_core::prompt::CesMode;
use serde::{Deserialize, Serialize};

use crate::pipeline::{Pipeline, PipelineError};
use crate::store::{append_ndjson_line, read_ndjson, MosStore};

/// One line of the raw timing log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingLine {
    pub config_hash: String,
    pub seed: u64,
    pub query_id: String,
    pub mode: CesMode,
    pub iteration: u32,
    pub latency_ms: f64,
}

impl TimingLine {
    fn record(&self) -> TimingRecord {
        TimingRecord {
            query_id: self.query_id.clone(),
            mode: self.mode,
            iteration: self.iteration,
            latency_ms: self.latency_ms,
        }
    }
}

/// The bench command's structured result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub config_hash: String,
    pub seed: u64,
    pub backend_id: String,
    pub iterations: u32,
    /// Timings measured by this invocation (0 when resuming a complete log).
    pub n_new_timings: usize,
    pub report: BenchReport,
}

/// Runs (or resumes) the latency benchmark and writes `reports/bench.json`.
pub async fn run_bench(pipeline: &Pipeline) -> Result<BenchOutput, PipelineError> {
    let dataset = pipeline.ensure_dataset()?;
    let config = &pipeline.config().config;
    let backend_id = config.bench_backend_id().to_string();
    let params = config.generation.params();
    let iterations = config.bench.iterations;
    let config_hash = pipeline.config().config_hash.clone();
    let seed = config.run.seed;

    // Queries to benchmark, in dataset order.
    let selected: Vec<&qfces_core::catalog::QueryInstance> = if config.bench.query_ids.is_empty() {
        dataset.instances.iter().collect()
    } else {
        let mut picked = Vec::new();
        for id in &config.bench.query_ids {
            picked.push(dataset.find(id).ok_or_else(|| PipelineError::UnknownQuery {
                query_id: id.clone(),
            })?);
        }
        picked
    };
    if selected.is_empty() {
        return Err(PipelineError::NothingToDo(
            "no queries to benchmark".to_string(),
        ));
    }

    // Opinion summaries for the summary-based prompts.
    let mos_path = match &config.bench.mos_store {
        Some(path) => pipeline.config().resolve(path),
        None => pipeline.run_dir().mos_file(),
    };
    if !mos_path.exists() {
        return Err(PipelineError::MissingStore {
            path: mos_path,
            hint: "bench needs opinion summaries; run gen-mos or set bench.mos_store".to_string(),
        });
    }
    let mos_store = MosStore::load(&mos_path)?;

    // Render both prompt variants per query, outside the timed region.
    let mut prompts = Vec::with_capacity(selected.len());
    for instance in &selected {
        let mut per_mode = Vec::with_capacity(2);
        for mode in [CesMode::Mos, CesMode::Dia] {
            let inputs = pipeline.ces_inputs(instance, mode, Some(&mos_store))?;
            let prompt = pipeline
                .templates()
                .render_ces_generation(&instance.query, &inputs, mode)?;
            per_mode.push((mode, prompt));
        }
        prompts.push((instance.query_id.clone(), per_mode));
    }

    // Resume: skip cells already in the log.
    let log_path = pipeline.run_dir().bench_log_file();
    let existing: Vec<TimingLine> = if log_path.exists() {
        read_ndjson(&log_path)?
    } else {
        Vec::new()
    };
    let done: BTreeSet<(String, &'static str, u32)> = existing
        .iter()
        .map(|line| (line.query_id.clone(), line.mode.as_str(), line.iteration))
        .collect();

    let marker = pipeline.run_dir().bench_marker_file();
    std::fs::write(&marker, b"bench in progress\n").map_err(|e| {
        crate::store::StoreError::Io {
            path: marker.display().to_string(),
            source: e,
        }
    })?;

    let mut lines = existing;
    let mut n_new = 0usize;
    for (query_id, per_mode) in &prompts {
        for (mode, prompt) in per_mode {
            for iteration in 0..iterations {
                if done.contains(&(query_id.clone(), mode.as_str(), iteration)) {
                    continue;
                }
                let request = qfces_core::request::CompletionRequest {
                    system_message: prompt.system_message.clone(),
                    user_message: prompt.user_message.clone(),
                    params: params.clone(),
                    backend_id: backend_id.clone(),
                };
                let started = Instant::now();
                let result = pipeline.gateway().complete(&request).await?;
                let latency_ms = match result.latency_ms {
                    // Backends reporting their own latency (the simulated
                    // mock) are taken at their word; otherwise wall clock.
                    reported if reported > 0.0 => reported,
                    _ => started.elapsed().as_secs_f64() * 1000.0,
                };
                let line = TimingLine {
                    config_hash: config_hash.clone(),
                    seed,
                    query_id: query_id.clone(),
                    mode: *mode,
                    iteration,
                    latency_ms,
                };
                append_ndjson_line(&log_path, &line)?;
                lines.push(line);
                n_new += 1;
            }
        }
    }

    let records: Vec<TimingRecord> = lines.iter().map(TimingLine::record).collect();
    let report = build_report(&records)?;
    let output = BenchOutput {
        config_hash,
        seed,
        backend_id,
        iterations,
        n_new_timings: n_new,
        report,
    };
    crate::pipeline::write_pretty_json(
        &pipeline.run_dir().reports_dir().join("bench.json"),
        &output,
    )?;
    // The full grid is measured and reported: the run is complete.
    let _ = std::fs::remove_file(&marker);
    Ok(output)
}

impl From<BenchError> for PipelineError {
    fn from(err: BenchError) -> Self {
        PipelineError::NothingToDo(format!("bench log unusable: {err}"))
    }
}
