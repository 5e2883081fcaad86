//! Latency benchmark aggregation.
//!
//! The benchmark times comparative-summary generation twice per query:
//! once from condensed per-product opinion summaries and once from the
//! full raw product data. This module turns the raw per-iteration timings
//! into per-query statistics and an overall latency-reduction figure; the
//! timing loop itself lives with the backend runtime.

use alloc::string::String;
use alloc::vec::Vec;

use libm::sqrt;
use serde::{Deserialize, Serialize};

use crate::prompt::CesMode;

/// One timed generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub query_id: String,
    pub mode: CesMode,
    /// Zero-based iteration index within the (query, mode) series.
    pub iteration: u32,
    pub latency_ms: f64,
}

/// Summary statistics for one (query, mode) series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub query_id: String,
    pub mode: CesMode,
    pub n: u32,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    /// Sample standard deviation (zero for a single observation).
    pub stddev_ms: f64,
}

/// Aggregated benchmark outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// One entry per (query, mode), ordered by query id then mode.
    pub per_query: Vec<SeriesStats>,
    /// Mean latency over every summary-mode timing.
    pub mean_mos_ms: f64,
    /// Mean latency over every raw-input-mode timing.
    pub mean_dia_ms: f64,
    /// Latency reduction of summary mode relative to raw-input mode, in
    /// percent of the raw-input mean.
    pub reduction_percent: f64,
}

/// Why benchmark aggregation failed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("no timing records to aggregate")]
    Empty,
    #[error("no timings recorded for mode {mode}")]
    MissingMode { mode: CesMode },
    #[error("negative latency {latency_ms} ms for query {query_id}")]
    NegativeLatency { query_id: String, latency_ms: f64 },
    #[error("non-finite latency for query {query_id}")]
    NonFiniteLatency { query_id: String },
    #[error("duplicate iteration {iteration} for query {query_id} in mode {mode}")]
    DuplicateIteration {
        query_id: String,
        mode: CesMode,
        iteration: u32,
    },
    #[error("baseline mean {dia_ms} ms is not positive")]
    NonPositiveBaseline { dia_ms: f64 },
}

/// Latency reduction of the summary-driven mode against the raw-input
/// baseline, in percent: `100 * (dia - mos) / dia`.
///
/// Negative results mean the summary mode was slower. The baseline mean
/// must be strictly positive.
pub fn compare_means(mean_mos_ms: f64, mean_dia_ms: f64) -> Result<f64, BenchError> {
    if mean_dia_ms.is_nan() || mean_dia_ms <= 0.0 {
        return Err(BenchError::NonPositiveBaseline {
            dia_ms: mean_dia_ms,
        });
    }
    Ok(100.0 * (mean_dia_ms - mean_mos_ms) / mean_dia_ms)
}

fn series_stats(query_id: &str, mode: CesMode, latencies: &[f64]) -> SeriesStats {
    let n = latencies.len();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in latencies {
        min = if v < min { v } else { min };
        max = if v > max { v } else { max };
        sum += v;
    }
    let mean = sum / n as f64;
    let stddev = if n < 2 {
        0.0
    } else {
        let mut ss = 0.0;
        for &v in latencies {
            let d = v - mean;
            ss += d * d;
        }
        sqrt(ss / (n - 1) as f64)
    };
    SeriesStats {
        query_id: String::from(query_id),
        mode,
        n: n as u32,
        mean_ms: mean,
        min_ms: min,
        max_ms: max,
        stddev_ms: stddev,
    }
}

/// Aggregates raw timing records into a [`BenchReport`].
///
/// Records may arrive in any order; the report is a pure function of the
/// record set. Both modes must be represented, latencies must be finite
/// and non-negative, and iteration indices must be unique within their
/// (query, mode) series.
pub fn build_report(records: &[TimingRecord]) -> Result<BenchReport, BenchError> {
    use alloc::collections::{BTreeMap, BTreeSet};

    if records.is_empty() {
        return Err(BenchError::Empty);
    }

    let mode_rank = |m: CesMode| match m {
        CesMode::Mos => 0u8,
        CesMode::Dia => 1u8,
    };

    let mut seen: BTreeSet<(&str, u8, u32)> = BTreeSet::new();
    let mut series: BTreeMap<(&str, u8), Vec<f64>> = BTreeMap::new();
    for rec in records {
        if !rec.latency_ms.is_finite() {
            return Err(BenchError::NonFiniteLatency {
                query_id: rec.query_id.clone(),
            });
        }
        if rec.latency_ms < 0.0 {
            return Err(BenchError::NegativeLatency {
                query_id: rec.query_id.clone(),
                latency_ms: rec.latency_ms,
            });
        }
        if !seen.insert((&rec.query_id, mode_rank(rec.mode), rec.iteration)) {
            return Err(BenchError::DuplicateIteration {
                query_id: rec.query_id.clone(),
                mode: rec.mode,
                iteration: rec.iteration,
            });
        }
        series
            .entry((&rec.query_id, mode_rank(rec.mode)))
            .or_default()
            .push(rec.latency_ms);
    }

    // Per-series latencies in iteration order for reproducible sums.
    for ((query_id, mode), latencies) in &mut series {
        let mut keyed: Vec<(u32, f64)> = records
            .iter()
            .filter(|r| r.query_id == *query_id && mode_rank(r.mode) == *mode)
            .map(|r| (r.iteration, r.latency_ms))
            .collect();
        keyed.sort_unstable_by_key(|(it, _)| *it);
        *latencies = keyed.into_iter().map(|(_, v)| v).collect();
    }

    let mut per_query = Vec::with_capacity(series.len());
    let mut mode_totals = [(0.0f64, 0u64); 2];
    for ((query_id, mode_idx), latencies) in &series {
        let mode = if *mode_idx == 0 { CesMode::Mos } else { CesMode::Dia };
        per_query.push(series_stats(query_id, mode, latencies));
        let (sum, count) = &mut mode_totals[*mode_idx as usize];
        *sum += latencies.iter().sum::<f64>();
        *count += latencies.len() as u64;
    }

    for (mode, idx) in [(CesMode::Mos, 0usize), (CesMode::Dia, 1usize)] {
        if mode_totals[idx].1 == 0 {
            return Err(BenchError::MissingMode { mode });
        }
    }

    let mean_mos_ms = mode_totals[0].0 / mode_totals[0].1 as f64;
    let mean_dia_ms = mode_totals[1].0 / mode_totals[1].1 as f64;
    let reduction_percent = compare_means(mean_mos_ms, mean_dia_ms)?;

    Ok(BenchReport {
        per_query,
        mean_mos_ms,
        mean_dia_ms,
        reduction_percent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::round_half_even;
    use alloc::string::ToString;
    use alloc::vec;

    fn rec(query: &str, mode: CesMode, iteration: u32, latency_ms: f64) -> TimingRecord {
        TimingRecord {
            query_id: query.to_string(),
            mode,
            iteration,
            latency_ms,
        }
    }

    #[test]
    fn reduction_for_reference_means() {
        let r = compare_means(9990.0, 16550.0).unwrap();
        assert!((r - 39.63746223564955).abs() < 1e-12);
        assert_eq!(round_half_even(r, 2), 39.64);
    }

    #[test]
    fn reduction_edge_values() {
        assert_eq!(compare_means(5.0, 10.0).unwrap(), 50.0);
        assert_eq!(compare_means(10.0, 10.0).unwrap(), 0.0);
        assert_eq!(compare_means(12.0, 10.0).unwrap(), -20.0);
        assert_eq!(
            compare_means(5.0, 0.0),
            Err(BenchError::NonPositiveBaseline { dia_ms: 0.0 })
        );
        assert!(compare_means(5.0, -1.0).is_err());
    }

    #[test]
    fn report_from_hand_counted_records() {
        let records = vec![
            rec("q1", CesMode::Mos, 0, 10.0),
            rec("q1", CesMode::Mos, 1, 14.0),
            rec("q1", CesMode::Dia, 0, 30.0),
            rec("q1", CesMode::Dia, 1, 50.0),
            rec("q2", CesMode::Mos, 0, 6.0),
            rec("q2", CesMode::Mos, 1, 10.0),
            rec("q2", CesMode::Dia, 0, 20.0),
            rec("q2", CesMode::Dia, 1, 20.0),
        ];
        let report = build_report(&records).unwrap();

        assert_eq!(report.per_query.len(), 4);
        let q1_mos = &report.per_query[0];
        assert_eq!(q1_mos.query_id, "q1");
        assert_eq!(q1_mos.mode, CesMode::Mos);
        assert_eq!(q1_mos.n, 2);
        assert_eq!(q1_mos.mean_ms, 12.0);
        assert_eq!(q1_mos.min_ms, 10.0);
        assert_eq!(q1_mos.max_ms, 14.0);
        // Sample stddev of {10, 14}: sqrt(((−2)² + 2²) / 1) = sqrt(8).
        assert!((q1_mos.stddev_ms - sqrt(8.0)).abs() < 1e-12);

        let q2_dia = &report.per_query[3];
        assert_eq!(q2_dia.mode, CesMode::Dia);
        assert_eq!(q2_dia.stddev_ms, 0.0);

        // Overall means pool every timing of the mode.
        assert_eq!(report.mean_mos_ms, 10.0);
        assert_eq!(report.mean_dia_ms, 30.0);
        // 100 * (30 − 10) / 30 = 66.66…
        assert!((report.reduction_percent - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn report_is_order_independent() {
        let mut records = vec![
            rec("q2", CesMode::Dia, 1, 21.0),
            rec("q1", CesMode::Mos, 0, 10.0),
            rec("q2", CesMode::Dia, 0, 19.0),
            rec("q1", CesMode::Dia, 0, 30.0),
            rec("q2", CesMode::Mos, 0, 8.0),
        ];
        let a = build_report(&records).unwrap();
        records.reverse();
        let b = build_report(&records).unwrap();
        assert_eq!(a, b);
        // Deterministic ordering: query id ascending, summary mode first.
        let keys: Vec<(String, CesMode)> = a
            .per_query
            .iter()
            .map(|s| (s.query_id.clone(), s.mode))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("q1".to_string(), CesMode::Mos),
                ("q1".to_string(), CesMode::Dia),
                ("q2".to_string(), CesMode::Mos),
                ("q2".to_string(), CesMode::Dia),
            ]
        );
    }

    #[test]
    fn missing_mode_is_an_error() {
        let records = vec![rec("q1", CesMode::Mos, 0, 10.0)];
        assert_eq!(
            build_report(&records),
            Err(BenchError::MissingMode { mode: CesMode::Dia })
        );
    }

    #[test]
    fn invalid_latencies_are_rejected() {
        assert_eq!(build_report(&[]), Err(BenchError::Empty));
        assert!(matches!(
            build_report(&[rec("q1", CesMode::Mos, 0, -5.0)]),
            Err(BenchError::NegativeLatency { .. })
        ));
        assert!(matches!(
            build_report(&[rec("q1", CesMode::Mos, 0, f64::NAN)]),
            Err(BenchError::NonFiniteLatency { .. })
        ));
    }

    #[test]
    fn duplicate_iterations_are_rejected() {
        let records = vec![
            rec("q1", CesMode::Mos, 0, 10.0),
            rec("q1", CesMode::Mos, 0, 11.0),
        ];
        assert_eq!(
            build_report(&records),
            Err(BenchError::DuplicateIteration {
                query_id: "q1".to_string(),
                mode: CesMode::Mos,
                iteration: 0,
            })
        );
    }

    #[test]
    fn single_iteration_series_is_fine() {
        let records = vec![
            rec("q1", CesMode::Mos, 0, 10.0),
            rec("q1", CesMode::Dia, 0, 40.0),
        ];
        let report = build_report(&records).unwrap();
        assert_eq!(report.per_query[0].stddev_ms, 0.0);
        assert_eq!(report.reduction_percent, 75.0);
    }
}
