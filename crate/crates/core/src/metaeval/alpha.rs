//! Krippendorff's alpha inter-rater agreement.
//!
//! Alpha is the chance-corrected agreement `1 - D_o / D_e`: observed
//! disagreement over the disagreement expected if every rating were drawn
//! at random from the pooled value distribution. It is computed from the
//! coincidence matrix — for every unit rated by `m >= 2` raters, each
//! ordered pair of its ratings adds `1/(m-1)` to cell `(c, k)` — so raters
//! are interchangeable and missing ratings simply contribute no pairs.
//!
//! Two difference functions are offered for the 1-5 Likert scale: ordinal
//! (default; disagreement depends on how many ratings lie between the two
//! values) and interval (squared difference). The test suite checks the
//! coincidence-matrix path against a direct pairwise enumeration of the
//! defining formulas.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::prompt::{DimensionId, SCALE_MAX, SCALE_MIN};

use super::annotation::{AnnotationSet, RoundView};

/// Number of points on the rating scale.
const SCALE: usize = (SCALE_MAX - SCALE_MIN + 1) as usize;

/// Difference function used to weigh a disagreement between two ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMetric {
    /// Ordinal: distance counts the ratings lying between the two values.
    Ordinal,
    /// Interval: squared difference of the numeric values.
    Interval,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlphaError {
    #[error("rating {value} outside the 1-5 scale")]
    OutOfScale { value: u8 },
    #[error("no unit was rated by 2 or more raters")]
    NoCoRatedUnits,
    #[error("all co-rated values are identical; expected disagreement is zero")]
    ZeroExpectedDisagreement,
}

/// Alpha over a reliability table: one entry per unit, each listing the
/// ratings given by the raters (`None` = missing).
pub fn alpha_from_units(units: &[Vec<Option<u8>>], metric: AlphaMetric) -> Result<f64, AlphaError> {
    let mut coincidence = [[0.0f64; SCALE]; SCALE];
    let mut co_rated = false;

    for unit in units {
        let mut values: Vec<usize> = Vec::with_capacity(unit.len());
        for rating in unit.iter().flatten() {
            if !(SCALE_MIN..=SCALE_MAX).contains(rating) {
                return Err(AlphaError::OutOfScale { value: *rating });
            }
            values.push((rating - SCALE_MIN) as usize);
        }
        let m = values.len();
        if m < 2 {
            // A lone rating pairs with nothing; it carries no agreement
            // information and is excluded per the coincidence definition.
            continue;
        }
        co_rated = true;
        let weight = 1.0 / (m as f64 - 1.0);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    coincidence[values[i]][values[j]] += weight;
                }
            }
        }
    }
    if !co_rated {
        return Err(AlphaError::NoCoRatedUnits);
    }

    let marginals: [f64; SCALE] = core::array::from_fn(|c| coincidence[c].iter().sum());
    let n_total: f64 = marginals.iter().sum();

    let delta = |c: usize, k: usize| -> f64 {
        match metric {
            AlphaMetric::Interval => {
                let d = c as f64 - k as f64;
                d * d
            }
            AlphaMetric::Ordinal => {
                let (lo, hi) = if c <= k { (c, k) } else { (k, c) };
                let between: f64 = marginals[lo..=hi].iter().sum();
                let d = between - (marginals[lo] + marginals[hi]) / 2.0;
                d * d
            }
        }
    };

    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..SCALE {
        for k in 0..SCALE {
            if c == k {
                continue;
            }
            let d = delta(c, k);
            observed += coincidence[c][k] * d;
            expected += marginals[c] * marginals[k] * d;
        }
    }
    let d_o = observed / n_total;
    let d_e = expected / (n_total * (n_total - 1.0));
    if d_e == 0.0 {
        return Err(AlphaError::ZeroExpectedDisagreement);
    }
    Ok(1.0 - d_o / d_e)
}

/// Alpha for one dimension of an annotation set.
///
/// Units are the (query, summary) items of that dimension; the view picks
/// the round-1 snapshot or the post-discussion state.
pub fn krippendorff_alpha(
    set: &AnnotationSet,
    dimension: DimensionId,
    view: RoundView,
    metric: AlphaMetric,
) -> Result<f64, AlphaError> {
    let raters: Vec<&str> = set.raters().into_iter().collect();
    let mut units = Vec::new();
    for (item, scores) in set.scores_by_item(view) {
        if item.dimension != dimension {
            continue;
        }
        let unit: Vec<Option<u8>> = raters.iter().map(|r| scores.get(r).copied()).collect();
        units.push(unit);
    }
    alpha_from_units(&units, metric)
}

/// Per-dimension alpha for both annotation rounds, Table-style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub metric: AlphaMetric,
    pub rows: Vec<AgreementRow>,
    /// Mean alpha across dimensions, per round.
    pub average_round1: f64,
    pub average_round2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub dimension: DimensionId,
    pub round1: f64,
    pub round2: f64,
}

/// Computes alpha per dimension for the round-1 snapshot and the
/// post-discussion state, plus averaged rows.
pub fn agreement_report(
    set: &AnnotationSet,
    dimensions: &[DimensionId],
    metric: AlphaMetric,
) -> Result<AgreementReport, AlphaError> {
    let mut rows = Vec::with_capacity(dimensions.len());
    for &dimension in dimensions {
        rows.push(AgreementRow {
            dimension,
            round1: krippendorff_alpha(set, dimension, RoundView::Round1, metric)?,
            round2: krippendorff_alpha(set, dimension, RoundView::Round2, metric)?,
        });
    }
    let n = rows.len() as f64;
    let average_round1 = rows.iter().map(|r| r.round1).sum::<f64>() / n;
    let average_round2 = rows.iter().map(|r| r.round2).sum::<f64>() / n;
    Ok(AgreementReport {
        metric,
        rows,
        average_round1,
        average_round2,
    })
}
