//! Report assembly and text rendering.
//!
//! JSON artifacts under `reports/` keep full floating-point precision;
//! rounding (half-even, two decimals) happens only when rendering text
//! for the terminal, so stored numbers stay exact across formats.

use qfces_core::catalog::DatasetStats;
use qfces_core::judge::{aggregate_matrix, JudgeError, ScoreMatrix, ScoreRecord};
use qfces_core::metaeval::summary::CorrelationResult;
use qfces_core::prompt::{DimensionId, CES_DIMENSIONS, MOS_DIMENSIONS};
use qfces_core::text::round_half_even;
use serde::{Deserialize, Serialize};

use crate::benchrunner::BenchOutput;
use crate::pipeline::{AgreementOutput, FormatSummary, IngestReport};

/// Aggregated judge scores of one run: one model x dimension matrix per
/// summary family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresReport {
    pub config_hash: String,
    pub seed: u64,
    /// Matrix over comparative-summary dimensions (instances `ces:*`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparative: Option<ScoreMatrix>,
    /// Matrix over opinion-summary dimensions (instances `mos:*`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opinion: Option<ScoreMatrix>,
}

/// Splits judge records by instance family and aggregates each into a
/// matrix over the dimensions actually judged (in canonical order).
pub fn build_scores_report(
    records: &[ScoreRecord],
    config_hash: &str,
    seed: u64,
) -> Result<ScoresReport, JudgeError> {
    let build = |prefix: &str, canonical: &[DimensionId]| -> Result<Option<ScoreMatrix>, JudgeError> {
        let family: Vec<ScoreRecord> = records
            .iter()
            .filter(|r| r.instance_id.starts_with(prefix))
            .cloned()
            .collect();
        if family.is_empty() {
            return Ok(None);
        }
        let present: std::collections::BTreeSet<DimensionId> =
            family.iter().map(|r| r.dimension).collect();
        let dimensions: Vec<DimensionId> = canonical
            .iter()
            .copied()
            .filter(|d| present.contains(d))
            .collect();
        aggregate_matrix(&family, &dimensions).map(Some)
    };
    Ok(ScoresReport {
        config_hash: config_hash.to_string(),
        seed,
        comparative: build("ces:", &CES_DIMENSIONS)?,
        opinion: build("mos:", &MOS_DIMENSIONS)?,
    })
}

/// Two-decimal half-even formatting for table cells.
fn cell(value: f64) -> String {
    format!("{:.2}", round_half_even(value, 2))
}

/// Renders rows of labelled columns with aligned widths.
fn text_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, value) in row.iter().enumerate() {
            if value.len() > widths[i] {
                widths[i] = value.len();
            }
        }
    }
    let render_row = |cells: &[String]| -> String {
        let mut out = String::new();
        for (i, value) in cells.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            // Left-align the first (label) column, right-align numbers.
            if i == 0 {
                out.push_str(&format!("{value:<width$}", width = widths[i]));
            } else {
                out.push_str(&format!("{value:>width$}", width = widths[i]));
            }
        }
        out.trim_end().to_string()
    };
    let mut lines = Vec::with_capacity(rows.len() + 2);
    lines.push(render_row(header));
    lines.push("-".repeat(lines[0].len()));
    for row in rows {
        lines.push(render_row(row));
    }
    lines.join("\n")
}

pub fn render_stats(stats: &DatasetStats) -> String {
    let rows = vec![
        vec![
            "Unique queries".to_string(),
            stats.n_unique_queries.to_string(),
        ],
        vec![
            "Products".to_string(),
            stats.n_total_products.to_string(),
        ],
        vec![
            "Avg reviews per product".to_string(),
            cell(stats.avg_reviews_per_product),
        ],
        vec![
            "Avg words per review".to_string(),
            cell(stats.avg_review_words),
        ],
        vec![
            "Avg words per description".to_string(),
            cell(stats.avg_description_words),
        ],
        vec![
            "Avg words in key features".to_string(),
            cell(stats.avg_key_feature_words),
        ],
        vec![
            "Avg words in specifications".to_string(),
            cell(stats.avg_spec_words),
        ],
    ];
    text_table(
        &["Statistic".to_string(), "Value".to_string()],
        &rows,
    )
}

pub fn render_ingest(report: &IngestReport) -> String {
    let mut out = format!(
        "ingested {} queries ({} products), {} line(s) dropped",
        report.n_queries, report.n_products, report.n_dropped
    );
    for drop in &report.dropped {
        out.push_str(&format!("\n  line {}: {}", drop.line, drop.reason));
    }
    out
}

pub fn render_matrix(title: &str, matrix: &ScoreMatrix) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(matrix.dimensions.iter().map(|d| d.as_str().to_string()));
    header.push("average".to_string());
    let rows: Vec<Vec<String>> = matrix
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![row.model.clone()];
            cells.extend(row.cells.iter().map(|v| cell(*v)));
            cells.push(cell(row.average));
            cells
        })
        .collect();
    format!("{title}\n{}", text_table(&header, &rows))
}

pub fn render_scores(report: &ScoresReport) -> String {
    let mut sections = Vec::new();
    if let Some(matrix) = &report.comparative {
        sections.push(render_matrix("Comparative summaries", matrix));
    }
    if let Some(matrix) = &report.opinion {
        sections.push(render_matrix("Opinion summaries", matrix));
    }
    if sections.is_empty() {
        sections.push("no judge scores recorded".to_string());
    }
    sections.join("\n\n")
}

pub fn render_format(summary: &FormatSummary) -> String {
    let rows: Vec<Vec<String>> = summary
        .rows
        .iter()
        .map(|row| {
            vec![
                row.query_id.clone(),
                if row.passed { "pass" } else { "FAIL" }.to_string(),
                if row.failed_checks.is_empty() {
                    "-".to_string()
                } else {
                    row.failed_checks.join(",")
                },
            ]
        })
        .collect();
    format!(
        "format checks ({} mode): {}/{} passed\n{}",
        summary.mode,
        summary.n_passed,
        summary.n_checked,
        text_table(
            &[
                "Query".to_string(),
                "Result".to_string(),
                "Failed checks".to_string(),
            ],
            &rows,
        )
    )
}

pub fn render_correlation(result: &CorrelationResult) -> String {
    let rows = vec![
        vec!["Spearman rho".to_string(), cell(result.rho)],
        vec!["Kendall tau-b".to_string(), cell(result.tau)],
        vec!["p (rho)".to_string(), format!("{:.4}", result.p_rho)],
        vec!["p (tau)".to_string(), format!("{:.4}", result.p_tau)],
        vec![
            "Queries used".to_string(),
            result.n_queries_used.to_string(),
        ],
        vec![
            "Queries skipped (constant)".to_string(),
            result.n_queries_skipped_constant.to_string(),
        ],
    ];
    text_table(&["Summary-level correlation".to_string(), "Value".to_string()], &rows)
}

pub fn render_agreement(output: &AgreementOutput) -> String {
    let alpha = &output.alpha;
    let mut rows: Vec<Vec<String>> = alpha
        .rows
        .iter()
        .map(|row| {
            vec![
                row.dimension.as_str().to_string(),
                cell(row.round1),
                cell(row.round2),
            ]
        })
        .collect();
    rows.push(vec![
        "average".to_string(),
        cell(alpha.average_round1),
        cell(alpha.average_round2),
    ]);
    let mut out = format!(
        "Krippendorff's alpha ({:?})\n{}",
        alpha.metric,
        text_table(
            &[
                "Dimension".to_string(),
                "Round 1".to_string(),
                "Round 2".to_string(),
            ],
            &rows,
        )
    );
    if let Some(tables) = &output.rater_tables {
        for table in tables {
            out.push_str(&format!(
                "\n\nRater correlations on {} (post-discussion)",
                table.dimension
            ));
            let mut pair_rows: Vec<Vec<String>> = table
                .pairwise
                .iter()
                .map(|p| {
                    vec![
                        format!("{} vs {}", p.rater_a, p.rater_b),
                        cell(p.rho),
                        cell(p.tau),
                    ]
                })
                .collect();
            pair_rows.push(vec![
                "mean (pairwise)".to_string(),
                cell(table.pairwise_mean_rho),
                cell(table.pairwise_mean_tau),
            ]);
            for v in &table.vs_average {
                pair_rows.push(vec![
                    format!("{} vs average", v.rater),
                    cell(v.rho),
                    cell(v.tau),
                ]);
            }
            pair_rows.push(vec![
                "mean (vs average)".to_string(),
                cell(table.vs_average_mean_rho),
                cell(table.vs_average_mean_tau),
            ]);
            out.push('\n');
            out.push_str(&text_table(
                &[
                    "Raters".to_string(),
                    "rho".to_string(),
                    "tau".to_string(),
                ],
                &pair_rows,
            ));
        }
    }
    out
}

pub fn render_flags(report: &qfces_core::metaeval::annotation::FlagReport) -> String {
    let mut out = format!(
        "{} item(s) flagged for re-annotation, {} incomplete",
        report.flagged.len(),
        report.incomplete.len()
    );
    for item in &report.flagged {
        out.push_str(&format!(
            "\n  flagged: {} / {} / {}",
            item.query_id, item.summary_id, item.dimension
        ));
    }
    for item in &report.incomplete {
        out.push_str(&format!(
            "\n  incomplete: {} / {} / {}",
            item.query_id, item.summary_id, item.dimension
        ));
    }
    out
}

pub fn render_bench(output: &BenchOutput) -> String {
    let report = &output.report;
    let rows: Vec<Vec<String>> = report
        .per_query
        .iter()
        .map(|s| {
            vec![
                s.query_id.clone(),
                s.mode.as_str().to_string(),
                s.n.to_string(),
                cell(s.mean_ms),
                cell(s.min_ms),
                cell(s.max_ms),
                cell(s.stddev_ms),
            ]
        })
        .collect();
    format!(
        "latency benchmark ({} iterations per query and mode)\n{}\n\n\
         mean latency from opinion summaries: {} ms\n\
         mean latency from raw inputs:        {} ms\n\
         latency reduction:                   {}%",
        output.iterations,
        text_table(
            &[
                "Query".to_string(),
                "Mode".to_string(),
                "n".to_string(),
                "mean ms".to_string(),
                "min ms".to_string(),
                "max ms".to_string(),
                "stddev".to_string(),
            ],
            &rows,
        ),
        cell(report.mean_mos_ms),
        cell(report.mean_dia_ms),
        cell(report.reduction_percent),
    )
}
