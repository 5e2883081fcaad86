//! Command-line surface.
//!
//! Every command runs against one config file and one run directory.
//! Exit codes: 0 on success, 1 on validation failures (bad inputs,
//! missing upstream artifacts, bad arguments), 2 on backend failures
//! (transport errors, judges too unreliable to score).

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use qfces_core::metaeval::alpha::AlphaMetric;
use qfces_core::metaeval::annotation::DEFAULT_DISCREPANCY_THRESHOLD;
use qfces_core::prompt::{CesMode, DimensionId, CES_DIMENSIONS, MOS_DIMENSIONS};
use serde::Serialize;

use crate::benchrunner::{run_bench, BenchOutput};
use crate::config::load_config;
use crate::pipeline::{write_pretty_json, Pipeline, PipelineError};
use crate::report;

#[derive(Debug, Parser)]
#[command(
    name = "qfces",
    version,
    about = "Query-focused comparative summaries: generation, checking, judging, and benchmarks"
)]
pub struct Cli {
    /// Path to the run configuration file.
    #[arg(long, global = true, default_value = "qfces.toml")]
    pub config: PathBuf,

    /// Run directory name under the output dir; defaults to reusing the
    /// latest run of this config, else a fresh timestamped id.
    #[arg(long, global = true)]
    pub run_id: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the dataset file and copy it into the run directory.
    Ingest {
        /// Drop invalid lines (reporting them) instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Corpus statistics of the dataset.
    Stats {
        #[arg(long)]
        json: bool,
    },
    /// Generate one opinion summary per (query, product).
    GenMos,
    /// Generate one comparative summary per query.
    GenCes {
        /// "mos" builds from opinion summaries, "dia" from raw inputs.
        #[arg(long, value_parser = parse_mode)]
        mode: CesMode,
    },
    /// Structural checks on generated comparative summaries.
    CheckFormat {
        /// Which mode's summaries to check; defaults to the configured one.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<CesMode>,
        #[arg(long)]
        json: bool,
    },
    /// Score summaries on judge dimensions.
    Judge {
        /// "ces", "mos", "all", or a comma-separated dimension list.
        #[arg(long, default_value = "ces")]
        dims: String,
        /// Which mode's comparative summaries to judge; defaults to the
        /// configured one.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<CesMode>,
    },
    /// Summary-level correlation between two metric files.
    MetaEval {
        #[arg(long)]
        metric_a: PathBuf,
        #[arg(long)]
        metric_b: PathBuf,
        /// Permutation-test iterations.
        #[arg(long, default_value_t = 10_000)]
        iterations: u32,
        #[arg(long)]
        json: bool,
    },
    /// Inter-rater agreement over annotation files.
    Agreement {
        /// Round-1 rating records (NDJSON).
        #[arg(long)]
        annotations: PathBuf,
        /// Round-2 revisions to merge before the round-2 view.
        #[arg(long)]
        round2: Option<PathBuf>,
        /// Distance metric: "ordinal" or "interval".
        #[arg(long, default_value = "ordinal", value_parser = parse_metric)]
        metric: AlphaMetric,
        /// Discrepancy threshold used to admit round-2 revisions.
        #[arg(long, default_value_t = DEFAULT_DISCREPANCY_THRESHOLD)]
        threshold: u8,
        /// Also print rater-vs-rater rank correlations.
        #[arg(long)]
        tables: bool,
        #[arg(long)]
        json: bool,
    },
    /// Screen round-1 annotations for items to re-score.
    FlagRounds {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DISCREPANCY_THRESHOLD)]
        threshold: u8,
        #[arg(long)]
        json: bool,
    },
    /// Measure generation latency from opinion summaries vs raw inputs.
    Bench {
        #[arg(long)]
        json: bool,
    },
    /// Aggregate judge scores (and bench results when present).
    Report {
        #[arg(long)]
        json: bool,
    },
}

fn parse_mode(s: &str) -> Result<CesMode, String> {
    CesMode::parse(s).ok_or_else(|| format!("expected 'mos' or 'dia', got '{s}'"))
}

fn parse_metric(s: &str) -> Result<AlphaMetric, String> {
    match s {
        "ordinal" => Ok(AlphaMetric::Ordinal),
        "interval" => Ok(AlphaMetric::Interval),
        _ => Err(format!("expected 'ordinal' or 'interval', got '{s}'")),
    }
}

/// Expands a dimension selector: a family name or a comma-separated list.
pub fn parse_dims(selector: &str) -> Result<Vec<DimensionId>, PipelineError> {
    match selector.trim() {
        "ces" => Ok(CES_DIMENSIONS.to_vec()),
        "mos" => Ok(MOS_DIMENSIONS.to_vec()),
        "all" => Ok(DimensionId::all().to_vec()),
        list => {
            let mut dims = Vec::new();
            for part in list.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                let dim = DimensionId::parse(part).ok_or_else(|| {
                    PipelineError::BadArgument(format!(
                        "unknown dimension '{part}' (expected ces, mos, all, or dimension names)"
                    ))
                })?;
                if !dims.contains(&dim) {
                    dims.push(dim);
                }
            }
            if dims.is_empty() {
                return Err(PipelineError::BadArgument(
                    "no dimensions selected".to_string(),
                ));
            }
            Ok(dims)
        }
    }
}

fn print_output<T: Serialize>(value: &T, json: bool, text: String) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("report serializes")
        );
    } else {
        println!("{text}");
    }
}

/// Executes one parsed invocation.
pub async fn run(cli: Cli) -> Result<(), PipelineError> {
    let loaded = load_config(&cli.config)?;
    let pipeline = Pipeline::new(loaded, cli.run_id)?;

    match cli.command {
        Command::Ingest { lenient } => {
            let report = pipeline.ingest(lenient)?;
            println!("{}", report::render_ingest(&report));
        }
        Command::Stats { json } => {
            let stats = pipeline.stats()?;
            print_output(&stats, json, report::render_stats(&stats));
        }
        Command::GenMos => {
            let report = pipeline.gen_mos().await?;
            println!(
                "opinion summaries: {} generated, {} reused, {} total",
                report.generated, report.reused, report.total
            );
        }
        Command::GenCes { mode } => {
            let report = pipeline.gen_ces(mode).await?;
            println!(
                "comparative summaries ({mode}): {} generated, {} reused, {} total",
                report.generated, report.reused, report.total
            );
        }
        Command::CheckFormat { mode, json } => {
            let mode = mode.unwrap_or(pipeline.config().config.pipeline.mode);
            let summary = pipeline.check_format(mode)?;
            print_output(&summary, json, report::render_format(&summary));
        }
        Command::Judge { dims, mode } => {
            let dims = parse_dims(&dims)?;
            let mode = mode.unwrap_or(pipeline.config().config.pipeline.mode);
            let summary = pipeline.judge(&dims, mode).await?;
            println!(
                "judge: {} scored, {} reused, {} total",
                summary.judged, summary.reused, summary.total
            );
        }
        Command::MetaEval {
            metric_a,
            metric_b,
            iterations,
            json,
        } => {
            let result = pipeline.meta_eval(&metric_a, &metric_b, iterations)?;
            print_output(&result, json, report::render_correlation(&result));
        }
        Command::Agreement {
            annotations,
            round2,
            metric,
            threshold,
            tables,
            json,
        } => {
            let output =
                pipeline.agreement(&annotations, round2.as_deref(), metric, threshold, tables)?;
            print_output(&output, json, report::render_agreement(&output));
        }
        Command::FlagRounds {
            annotations,
            threshold,
            json,
        } => {
            let flags = pipeline.flag_rounds(&annotations, threshold)?;
            print_output(&flags, json, report::render_flags(&flags));
        }
        Command::Bench { json } => {
            let output = run_bench(&pipeline).await?;
            print_output(&output, json, report::render_bench(&output));
        }
        Command::Report { json } => {
            let records = pipeline.judge_scores()?;
            let bench_path = pipeline.run_dir().reports_dir().join("bench.json");
            let bench: Option<BenchOutput> = if bench_path.exists() {
                let raw = std::fs::read_to_string(&bench_path).map_err(|e| {
                    crate::store::StoreError::Io {
                        path: bench_path.display().to_string(),
                        source: e,
                    }
                })?;
                Some(
                    serde_json::from_str(&raw).map_err(|e| crate::store::StoreError::Malformed {
                        path: bench_path.display().to_string(),
                        line: 1,
                        message: e.to_string(),
                    })?,
                )
            } else {
                None
            };
            if records.is_empty() && bench.is_none() {
                return Err(PipelineError::NothingToDo(
                    "nothing to report in this run; run judge or bench first".to_string(),
                ));
            }

            let loaded = pipeline.config();
            let scores = report::build_scores_report(
                &records,
                &loaded.config_hash,
                loaded.config.run.seed,
            )?;
            if !records.is_empty() {
                write_pretty_json(
                    &pipeline.run_dir().reports_dir().join("scores.json"),
                    &scores,
                )?;
            }

            #[derive(Serialize)]
            struct FullReport<'a> {
                scores: &'a report::ScoresReport,
                #[serde(skip_serializing_if = "Option::is_none")]
                bench: &'a Option<BenchOutput>,
            }
            let mut text = report::render_scores(&scores);
            if let Some(bench) = &bench {
                text.push_str("\n\n");
                text.push_str(&report::render_bench(bench));
            }
            print_output(
                &FullReport {
                    scores: &scores,
                    bench: &bench,
                },
                json,
                text,
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_selectors_expand() {
        assert_eq!(parse_dims("ces").unwrap(), CES_DIMENSIONS.to_vec());
        assert_eq!(parse_dims("mos").unwrap(), MOS_DIMENSIONS.to_vec());
        assert_eq!(parse_dims("all").unwrap().len(), 12);
        assert_eq!(
            parse_dims("clarity, query_relevance").unwrap(),
            vec![DimensionId::Clarity, DimensionId::QueryRelevance]
        );
        assert!(parse_dims("nope").is_err());
        assert!(parse_dims(" , ").is_err());
    }

    #[test]
    fn cli_parses_representative_invocations() {
        let cli = Cli::try_parse_from([
            "qfces",
            "--config",
            "c.toml",
            "--run-id",
            "run-a",
            "gen-ces",
            "--mode",
            "mos",
        ])
        .unwrap();
        assert_eq!(cli.config, PathBuf::from("c.toml"));
        assert_eq!(cli.run_id.as_deref(), Some("run-a"));
        assert!(matches!(
            cli.command,
            Command::GenCes { mode: CesMode::Mos }
        ));

        let cli = Cli::try_parse_from(["qfces", "judge", "--dims", "all"]).unwrap();
        assert!(matches!(cli.command, Command::Judge { .. }));

        assert!(Cli::try_parse_from(["qfces", "gen-ces", "--mode", "bad"]).is_err());
        assert!(Cli::try_parse_from(["qfces", "unknown-cmd"]).is_err());
    }

    #[test]
    fn metric_and_mode_parsers() {
        assert_eq!(parse_metric("ordinal").unwrap(), AlphaMetric::Ordinal);
        assert_eq!(parse_metric("interval").unwrap(), AlphaMetric::Interval);
        assert!(parse_metric("nominal").is_err());
        assert_eq!(parse_mode("dia").unwrap(), CesMode::Dia);
        assert!(parse_mode("MOS").is_err());
    }
}
