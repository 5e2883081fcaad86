//! Summary-level correlation of two metrics.
//!
//! Both metrics score the same (query, summary) pairs. For each query the
//! two score vectors over its candidate summaries are correlated, and the
//! per-query coefficients are averaged:
//!
//! ```text
//! corr = (1/Q) * sum_q K(a_q, b_q)
//! ```
//!
//! with K instantiated as both Spearman's rho and Kendall's tau-b. Queries
//! where either vector is constant (or has fewer than two summaries) carry
//! no rank information; they are skipped and counted rather than imputed.
//!
//! Significance comes from a permutation test that shuffles metric B's
//! scores within each query, preserving the per-query score multisets.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rank::{kendall_tau_b, spearman, RankError, MIN_PERMUTATIONS};

/// Scores keyed by (query_id, summary_id).
pub type MetricMap = BTreeMap<(String, String), f64>;

/// Outcome of [`summary_level_corr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    /// Mean per-query Spearman rho.
    pub rho: f64,
    /// Mean per-query Kendall tau-b.
    pub tau: f64,
    /// Two-sided permutation p-value for `rho`.
    pub p_rho: f64,
    /// Two-sided permutation p-value for `tau`.
    pub p_tau: f64,
    pub n_queries_used: usize,
    pub n_queries_skipped_constant: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SummaryError {
    #[error(
        "metric key sets differ: {only_in_a} keys only in A, {only_in_b} only in B \
         (e.g. {example_query}/{example_summary})"
    )]
    KeyMismatch {
        only_in_a: usize,
        only_in_b: usize,
        example_query: String,
        example_summary: String,
    },
    #[error("every query was skipped (constant scores or fewer than 2 summaries)")]
    AllQueriesSkipped,
    #[error(transparent)]
    Rank(#[from] RankError),
}

/// Correlates two metrics at summary level and averages over queries.
///
/// `iterations` (>= 100) and `seed` drive the permutation significance
/// test; everything is deterministic given the same inputs and seed.
pub fn summary_level_corr(
    metric_a: &MetricMap,
    metric_b: &MetricMap,
    iterations: u32,
    seed: u64,
) -> Result<CorrelationResult, SummaryError> {
    check_same_keys(metric_a, metric_b)?;
    if iterations < MIN_PERMUTATIONS {
        return Err(RankError::TooFewIterations {
            got: iterations,
            min: MIN_PERMUTATIONS,
        }
        .into());
    }

    // Group scores per query; BTreeMap iteration fixes summary order within
    // each query and query order overall.
    let mut per_query: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((query, summary_id), a) in metric_a {
        let b = metric_b[&(query.clone(), summary_id.clone())];
        let entry = per_query.entry(query).or_default();
        entry.0.push(*a);
        entry.1.push(b);
    }

    let total = per_query.len();
    let mut usable: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for (_query, (a, b)) in per_query {
        let constant =
            a.len() < 2 || a.iter().all(|v| *v == a[0]) || b.iter().all(|v| *v == b[0]);
        if !constant {
            usable.push((a, b));
        }
    }
    if usable.is_empty() {
        return Err(SummaryError::AllQueriesSkipped);
    }
    let n_used = usable.len();

    let mean_over = |pairs: &[(Vec<f64>, Vec<f64>)],
                     stat: fn(&[f64], &[f64]) -> Result<f64, RankError>|
     -> Result<f64, RankError> {
        let mut sum = 0.0;
        for (a, b) in pairs {
            sum += stat(a, b)?;
        }
        Ok(sum / pairs.len() as f64)
    };

    let rho = mean_over(&usable, spearman)?;
    let tau = mean_over(&usable, kendall_tau_b)?;

    // Permutation test: shuffle B within each query, recompute both means.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits_rho = 0u64;
    let mut hits_tau = 0u64;
    let slack = 1e-12;
    let mut permuted = usable.clone();
    for _ in 0..iterations {
        for (_, b) in &mut permuted {
            b.shuffle(&mut rng);
        }
        let r = mean_over(&permuted, spearman)?;
        let t = mean_over(&permuted, kendall_tau_b)?;
        if r.abs() >= rho.abs() - slack {
            hits_rho += 1;
        }
        if t.abs() >= tau.abs() - slack {
            hits_tau += 1;
        }
    }
    let denom = 1.0 + iterations as f64;
    Ok(CorrelationResult {
        rho,
        tau,
        p_rho: (1.0 + hits_rho as f64) / denom,
        p_tau: (1.0 + hits_tau as f64) / denom,
        n_queries_used: n_used,
        n_queries_skipped_constant: total - n_used,
    })
}

fn check_same_keys(metric_a: &MetricMap, metric_b: &MetricMap) -> Result<(), SummaryError> {
    if metric_a.keys().eq(metric_b.keys()) {
        return Ok(());
    }
    let only_in_a = metric_a.keys().filter(|k| !metric_b.contains_key(*k)).count();
    let only_in_b = metric_b.keys().filter(|k| !metric_a.contains_key(*k)).count();
    let example = metric_a
        .keys()
        .find(|k| !metric_b.contains_key(*k))
        .or_else(|| metric_b.keys().find(|k| !metric_a.contains_key(*k)))
        .expect("key sets differ");
    Err(SummaryError::KeyMismatch {
        only_in_a,
        only_in_b,
        example_query: example.0.clone(),
        example_summary: example.1.clone(),
    })
}
