//! Likert rating records and the two-round annotation protocol.
//!
//! Raters score (query, summary, dimension) items on a 1-5 scale in round
//! one. Items where the raters' scores spread by at least the discrepancy
//! threshold (default 2 points) are flagged and re-scored in a second
//! round after discussion; round-2 scores replace round-1 scores for
//! exactly those items. [`rater_tables`] reports how strongly each pair of
//! raters — and each rater against the per-item average — correlates.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::prompt::{DimensionId, SCALE_MAX, SCALE_MIN};

use super::rank::{kendall_tau_b, spearman, RankError};

/// Items are re-scored when rater scores spread by this many points.
pub const DEFAULT_DISCREPANCY_THRESHOLD: u8 = 2;

/// One rater's score for one item in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub query_id: String,
    pub summary_id: String,
    pub dimension: DimensionId,
    /// 1 = initial annotation, 2 = post-discussion re-annotation.
    pub round: u8,
    pub score: u8,
}

impl RatingRecord {
    fn validate(&self) -> Result<(), AnnotationError> {
        if !(SCALE_MIN..=SCALE_MAX).contains(&self.score) {
            return Err(AnnotationError::ScoreOutOfRange {
                rater_id: self.rater_id.clone(),
                score: self.score,
            });
        }
        if !(self.round == 1 || self.round == 2) {
            return Err(AnnotationError::BadRound { round: self.round });
        }
        Ok(())
    }

    fn item(&self) -> ItemKey {
        ItemKey {
            query_id: self.query_id.clone(),
            summary_id: self.summary_id.clone(),
            dimension: self.dimension,
        }
    }
}

/// What gets rated: one summary for one query on one dimension.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemKey {
    pub query_id: String,
    pub summary_id: String,
    pub dimension: DimensionId,
}

/// Which annotation state to read scores from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundView {
    /// Pre-discussion scores: round-1 records only.
    Round1,
    /// Post-discussion state: the round-2 record where one exists,
    /// otherwise the round-1 record.
    Round2,
}

/// A validated collection of rating records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    records: Vec<RatingRecord>,
}

impl AnnotationSet {
    /// Validates scores, rounds, and uniqueness of
    /// (rater, query, summary, dimension, round).
    pub fn new(records: Vec<RatingRecord>) -> Result<Self, AnnotationError> {
        let mut seen: BTreeSet<(&str, &str, &str, DimensionId, u8)> = BTreeSet::new();
        for r in &records {
            r.validate()?;
            let key = (
                r.rater_id.as_str(),
                r.query_id.as_str(),
                r.summary_id.as_str(),
                r.dimension,
                r.round,
            );
            if !seen.insert(key) {
                return Err(AnnotationError::DuplicateRecord {
                    rater_id: r.rater_id.clone(),
                    item: r.item(),
                    round: r.round,
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All rater ids appearing in the set, sorted.
    pub fn raters(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.rater_id.as_str()).collect()
    }

    /// Per-item scores by rater under the given view.
    pub fn scores_by_item(&self, view: RoundView) -> BTreeMap<ItemKey, BTreeMap<&str, u8>> {
        let mut out: BTreeMap<ItemKey, BTreeMap<&str, u8>> = BTreeMap::new();
        let mut rounds: BTreeMap<(ItemKey, &str), u8> = BTreeMap::new();
        for r in &self.records {
            match view {
                RoundView::Round1 => {
                    if r.round != 1 {
                        continue;
                    }
                    out.entry(r.item()).or_default().insert(&r.rater_id, r.score);
                }
                RoundView::Round2 => {
                    let key = (r.item(), r.rater_id.as_str());
                    let prev_round = rounds.get(&key).copied().unwrap_or(0);
                    if r.round > prev_round {
                        rounds.insert(key, r.round);
                        out.entry(r.item()).or_default().insert(&r.rater_id, r.score);
                    }
                }
            }
        }
        out
    }

    /// (item, rater) cells missing from round 1, relative to the full rater
    /// pool of the set. Reported, never imputed.
    pub fn missing_cells(&self) -> Vec<(ItemKey, String)> {
        let raters = self.raters();
        let mut missing = Vec::new();
        for (item, scores) in self.scores_by_item(RoundView::Round1) {
            for rater in &raters {
                if !scores.contains_key(rater) {
                    missing.push((item.clone(), rater.to_string()));
                }
            }
        }
        missing
    }
}

/// Outcome of discrepancy screening on round-1 annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagReport {
    /// Items whose score spread reached the threshold; to be re-scored.
    pub flagged: Vec<ItemKey>,
    /// Items missing at least one rater's score; excluded from flagging.
    pub incomplete: Vec<ItemKey>,
}

/// Screens round-1 annotations for rater discrepancies.
///
/// An item is flagged when `max(scores) - min(scores) >= threshold` and
/// every rater in the set has scored it. Items with missing raters are
/// reported separately and never flagged.
pub fn flag_discrepancies(round1: &AnnotationSet, threshold: u8) -> FlagReport {
    let raters = round1.raters();
    let mut flagged = Vec::new();
    let mut incomplete = Vec::new();
    for (item, scores) in round1.scores_by_item(RoundView::Round1) {
        if scores.len() < raters.len() {
            incomplete.push(item);
            continue;
        }
        let min = scores.values().min().copied().unwrap_or(SCALE_MIN);
        let max = scores.values().max().copied().unwrap_or(SCALE_MIN);
        if max - min >= threshold {
            flagged.push(item);
        }
    }
    FlagReport { flagged, incomplete }
}

/// Merges a re-annotation round into the round-1 set.
///
/// Round-2 records are admitted only for items flagged under `threshold`
/// and only from raters present in round 1. The merged set keeps both
/// rounds: [`RoundView::Round1`] still yields the original scores, while
/// [`RoundView::Round2`] yields each rater's revision where one exists
/// and the round-1 score elsewhere. Unflagged or unknown revisions are
/// contract violations.
pub fn merge_rounds(
    round1: &AnnotationSet,
    round2: &AnnotationSet,
    threshold: u8,
) -> Result<AnnotationSet, AnnotationError> {
    for r in round1.records() {
        if r.round != 1 {
            return Err(AnnotationError::WrongRoundTag {
                expected: 1,
                got: r.round,
            });
        }
    }
    for r in round2.records() {
        if r.round != 2 {
            return Err(AnnotationError::WrongRoundTag {
                expected: 2,
                got: r.round,
            });
        }
    }

    let flags: BTreeSet<ItemKey> = flag_discrepancies(round1, threshold).flagged.into_iter().collect();
    let raters = round1.raters();
    for r in round2.records() {
        let item = r.item();
        if !flags.contains(&item) {
            return Err(AnnotationError::UnflaggedRevision { item });
        }
        if !raters.contains(r.rater_id.as_str()) {
            return Err(AnnotationError::UnknownRater {
                rater_id: r.rater_id.clone(),
            });
        }
    }

    let mut merged: Vec<RatingRecord> = round1.records().to_vec();
    merged.extend(round2.records().iter().cloned());
    AnnotationSet::new(merged)
}

/// Correlation of one rater pair on one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterPairCorr {
    pub rater_a: String,
    pub rater_b: String,
    pub rho: f64,
    pub tau: f64,
}

/// Correlation of one rater against the per-item mean of all raters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterVsAverage {
    pub rater: String,
    pub rho: f64,
    pub tau: f64,
}

/// Per-dimension rater agreement expressed as rank correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterTable {
    pub dimension: DimensionId,
    pub pairwise: Vec<RaterPairCorr>,
    pub pairwise_mean_rho: f64,
    pub pairwise_mean_tau: f64,
    /// The per-item mean includes the rater being correlated.
    pub vs_average: Vec<RaterVsAverage>,
    pub vs_average_mean_rho: f64,
    pub vs_average_mean_tau: f64,
}

/// Builds one [`RaterTable`] per dimension from the merged view.
pub fn rater_tables(
    set: &AnnotationSet,
    dimensions: &[DimensionId],
    view: RoundView,
) -> Result<Vec<RaterTable>, AnnotationError> {
    let raters: Vec<String> = set.raters().into_iter().map(|r| r.to_string()).collect();
    if raters.len() < 2 {
        return Err(AnnotationError::TooFewRaters { got: raters.len() });
    }
    let by_item = set.scores_by_item(view);
    let mut tables = Vec::with_capacity(dimensions.len());
    for &dimension in dimensions {
        let items: Vec<&BTreeMap<&str, u8>> = by_item
            .iter()
            .filter(|(item, _)| item.dimension == dimension)
            .map(|(_, scores)| scores)
            .collect();

        let mut pairwise = Vec::new();
        for (i, ra) in raters.iter().enumerate() {
            for rb in &raters[i + 1..] {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for scores in &items {
                    if let (Some(&a), Some(&b)) =
                        (scores.get(ra.as_str()), scores.get(rb.as_str()))
                    {
                        xs.push(a as f64);
                        ys.push(b as f64);
                    }
                }
                if xs.len() < 2 {
                    return Err(AnnotationError::InsufficientOverlap {
                        rater_a: ra.clone(),
                        rater_b: rb.clone(),
                        dimension,
                        co_rated: xs.len(),
                    });
                }
                let corr = |f: fn(&[f64], &[f64]) -> Result<f64, RankError>| {
                    f(&xs, &ys).map_err(|source| AnnotationError::Correlation {
                        rater_a: ra.clone(),
                        rater_b: rb.clone(),
                        dimension,
                        source,
                    })
                };
                pairwise.push(RaterPairCorr {
                    rater_a: ra.clone(),
                    rater_b: rb.clone(),
                    rho: corr(spearman)?,
                    tau: corr(kendall_tau_b)?,
                });
            }
        }

        let mut vs_average = Vec::new();
        for rater in &raters {
            let mut xs = Vec::new();
            let mut means = Vec::new();
            for scores in &items {
                if let Some(&own) = scores.get(rater.as_str()) {
                    let sum: u64 = scores.values().map(|&s| s as u64).sum();
                    xs.push(own as f64);
                    means.push(sum as f64 / scores.len() as f64);
                }
            }
            if xs.len() < 2 {
                return Err(AnnotationError::InsufficientOverlap {
                    rater_a: rater.clone(),
                    rater_b: "average".to_string(),
                    dimension,
                    co_rated: xs.len(),
                });
            }
            let corr = |f: fn(&[f64], &[f64]) -> Result<f64, RankError>| {
                f(&xs, &means).map_err(|source| AnnotationError::Correlation {
                    rater_a: rater.clone(),
                    rater_b: "average".to_string(),
                    dimension,
                    source,
                })
            };
            vs_average.push(RaterVsAverage {
                rater: rater.clone(),
                rho: corr(spearman)?,
                tau: corr(kendall_tau_b)?,
            });
        }

        let mean = |vals: &mut dyn Iterator<Item = f64>| {
            let collected: Vec<f64> = vals.collect();
            collected.iter().sum::<f64>() / collected.len() as f64
        };
        tables.push(RaterTable {
            dimension,
            pairwise_mean_rho: mean(&mut pairwise.iter().map(|p| p.rho)),
            pairwise_mean_tau: mean(&mut pairwise.iter().map(|p| p.tau)),
            vs_average_mean_rho: mean(&mut vs_average.iter().map(|v| v.rho)),
            vs_average_mean_tau: mean(&mut vs_average.iter().map(|v| v.tau)),
            pairwise,
            vs_average,
        });
    }
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("rater {rater_id}: score {score} outside the 1-5 scale")]
    ScoreOutOfRange { rater_id: String, score: u8 },
    #[error("round must be 1 or 2, got {round}")]
    BadRound { round: u8 },
    #[error("duplicate record: rater {rater_id}, item {item:?}, round {round}")]
    DuplicateRecord {
        rater_id: String,
        item: ItemKey,
        round: u8,
    },
    #[error("all records must carry round {expected}, found round {got}")]
    WrongRoundTag { expected: u8, got: u8 },
    #[error("round-2 record for unflagged item {item:?}")]
    UnflaggedRevision { item: ItemKey },
    #[error("round-2 record from rater {rater_id} absent in round 1")]
    UnknownRater { rater_id: String },
    #[error("need at least 2 raters, got {got}")]
    TooFewRaters { got: usize },
    #[error(
        "raters {rater_a}/{rater_b} share only {co_rated} co-rated items on {dimension} (need 2)"
    )]
    InsufficientOverlap {
        rater_a: String,
        rater_b: String,
        dimension: DimensionId,
        co_rated: usize,
    },
    #[error("correlating {rater_a} with {rater_b} on {dimension}: {source}")]
    Correlation {
        rater_a: String,
        rater_b: String,
        dimension: DimensionId,
        source: RankError,
    },
}
