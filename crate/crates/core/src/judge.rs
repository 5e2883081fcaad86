//! Turning sampled evaluator outputs into scores.
//!
//! An evaluator prompt is sampled `n` times; each sample either yields an
//! integer rating on the 1-5 scale or is invalid (no parseable rating, or a
//! transport failure). The per-prompt outcome is a [`ScoreDistribution`]
//! over the five ratings, and its [`weighted_score`](ScoreDistribution::weighted_score)
//! is the probability-weighted rating
//!
//! ```text
//! o = sum_k p(k) * k,   p(k) = count(k) / n_valid
//! ```
//!
//! computed as one fused sum-and-divide so it is bit-identical to the
//! arithmetic mean of the valid samples.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::prompt::{DimensionId, SCALE_MAX, SCALE_MIN};

/// Extracts the integer rating from one evaluator response.
///
/// The primary rule finds the last occurrence of `score` (case-insensitive)
/// that is followed within ten bytes by a digit run whose value is 1-5.
/// If no such occurrence exists, the fallback takes the last maximal digit
/// run anywhere in the text whose value is 1-5. Returns `None` when neither
/// rule matches.
pub fn extract_score(text: &str) -> Option<u8> {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();

    let mut positions: Vec<usize> = Vec::new();
    let mut from = 0;
    while let Some(at) = lower[from..].find("score") {
        positions.push(from + at);
        from += at + 1;
    }
    for &pos in positions.iter().rev() {
        let after = pos + "score".len();
        let window_end = (after + 10).min(bytes.len());
        let mut i = after;
        while i < window_end && !bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i < window_end {
            if let Some(value) = digit_run_value(bytes, i) {
                return Some(value);
            }
        }
    }

    // Fallback: last standalone digit run on the scale.
    let mut i = bytes.len();
    while i > 0 {
        i -= 1;
        if bytes[i].is_ascii_digit() {
            let mut start = i;
            while start > 0 && bytes[start - 1].is_ascii_digit() {
                start -= 1;
            }
            if let Some(value) = digit_run_value(bytes, start) {
                return Some(value);
            }
            i = start;
        }
    }
    None
}

/// Parses the maximal digit run starting at `start` and keeps it only when
/// its value lies on the rating scale.
fn digit_run_value(bytes: &[u8], start: usize) -> Option<u8> {
    let mut end = start;
    let mut value: u32 = 0;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        value = value.saturating_mul(10).saturating_add((bytes[end] - b'0') as u32);
        end += 1;
    }
    if (SCALE_MIN as u32..=SCALE_MAX as u32).contains(&value) {
        Some(value as u8)
    } else {
        None
    }
}

/// Histogram of sampled ratings plus the invalid count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScoreDistribution {
    /// `counts[k-1]` is how many samples rated `k`.
    pub counts: [u64; 5],
    /// Samples with no parseable rating, including failed requests.
    pub n_invalid: u64,
}

impl ScoreDistribution {
    /// Tallies one sample.
    pub fn observe(&mut self, score: Option<u8>) {
        match score {
            Some(s) if (SCALE_MIN..=SCALE_MAX).contains(&s) => {
                self.counts[(s - 1) as usize] += 1;
            }
            _ => self.n_invalid += 1,
        }
    }

    /// Builds a distribution from already-extracted ratings.
    pub fn from_scores<I: IntoIterator<Item = Option<u8>>>(scores: I) -> Self {
        let mut dist = ScoreDistribution::default();
        for s in scores {
            dist.observe(s);
        }
        dist
    }

    /// Builds a distribution from raw response texts; `None` marks a sample
    /// whose request failed outright.
    pub fn from_responses<'a, I: IntoIterator<Item = Option<&'a str>>>(texts: I) -> Self {
        Self::from_scores(texts.into_iter().map(|t| t.and_then(extract_score)))
    }

    pub fn n_valid(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn n_total(&self) -> u64 {
        self.n_valid() + self.n_invalid
    }

    /// Fraction of samples that produced a rating; 0 when nothing was
    /// sampled.
    pub fn validity_fraction(&self) -> f64 {
        let total = self.n_total();
        if total == 0 {
            0.0
        } else {
            self.n_valid() as f64 / total as f64
        }
    }

    /// The probability-weighted rating over valid samples.
    ///
    /// Computed as `(sum_k k * count(k)) / n_valid` in one division, which
    /// makes it exactly equal to the arithmetic mean of the valid samples.
    pub fn weighted_score(&self) -> Result<f64, JudgeError> {
        let n_valid = self.n_valid();
        if n_valid == 0 {
            return Err(JudgeError::NoValidSamples);
        }
        let weighted_sum: u64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| (i as u64 + 1) * c)
            .sum();
        Ok(weighted_sum as f64 / n_valid as f64)
    }

    /// Errors when the fraction of valid samples is below `threshold`.
    pub fn ensure_valid_fraction(
        &self,
        dimension: DimensionId,
        threshold: f64,
    ) -> Result<(), JudgeError> {
        if self.validity_fraction() < threshold {
            return Err(JudgeError::TooManyInvalid {
                dimension,
                n_valid: self.n_valid(),
                n_total: self.n_total(),
            });
        }
        Ok(())
    }
}

/// One judged (summary, dimension) pair, as persisted by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    /// Identifies the judged summary (e.g. `query_id` or `query_id/product_id`).
    pub instance_id: String,
    /// The system that produced the judged summary.
    pub model: String,
    pub dimension: DimensionId,
    #[serde(flatten)]
    pub distribution: ScoreDistribution,
    /// Number of samples requested (>= observed when requests failed early).
    pub n_requested: u32,
    /// The probability-weighted rating, stored for the record.
    pub o: f64,
}

impl ScoreRecord {
    /// Builds a record, computing the weighted rating; errors when the
    /// distribution has no valid samples.
    pub fn new(
        instance_id: impl Into<String>,
        model: impl Into<String>,
        dimension: DimensionId,
        distribution: ScoreDistribution,
        n_requested: u32,
    ) -> Result<Self, JudgeError> {
        let o = distribution.weighted_score()?;
        Ok(Self {
            instance_id: instance_id.into(),
            model: model.into(),
            dimension,
            distribution,
            n_requested,
            o,
        })
    }
}

/// Mean rating per (model, dimension), with a per-model average column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub dimensions: Vec<DimensionId>,
    pub rows: Vec<MatrixRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub model: String,
    /// One mean per entry of [`ScoreMatrix::dimensions`], same order.
    pub cells: Vec<f64>,
    /// Mean of `cells`.
    pub average: f64,
}

/// Aggregates per-instance records into a model x dimension matrix.
///
/// Rows are sorted by model name. Every (model, dimension) pair must be
/// covered by at least one record; a hole would silently skew the averages,
/// so it is an error instead.
pub fn aggregate_matrix(
    records: &[ScoreRecord],
    dimensions: &[DimensionId],
) -> Result<ScoreMatrix, JudgeError> {
    if records.is_empty() {
        return Err(JudgeError::EmptyInput);
    }
    if dimensions.is_empty() {
        return Err(JudgeError::NoDimensions);
    }
    let mut models: Vec<&str> = records.iter().map(|r| r.model.as_str()).collect();
    models.sort_unstable();
    models.dedup();

    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        let mut cells = Vec::with_capacity(dimensions.len());
        for &dim in dimensions {
            let mut sum = 0.0;
            let mut n = 0u64;
            for r in records.iter().filter(|r| r.model == model && r.dimension == dim) {
                sum += r.o;
                n += 1;
            }
            if n == 0 {
                return Err(JudgeError::MissingCell {
                    model: model.to_string(),
                    dimension: dim,
                });
            }
            cells.push(sum / n as f64);
        }
        let average = cells.iter().sum::<f64>() / cells.len() as f64;
        rows.push(MatrixRow {
            model: model.to_string(),
            cells,
            average,
        });
    }
    Ok(ScoreMatrix {
        dimensions: dimensions.to_vec(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgeError {
    #[error("no valid samples to score")]
    NoValidSamples,
    #[error("dimension {dimension}: only {n_valid} of {n_total} samples were valid")]
    TooManyInvalid {
        dimension: DimensionId,
        n_valid: u64,
        n_total: u64,
    },
    #[error("no score records to aggregate")]
    EmptyInput,
    #[error("no dimensions requested")]
    NoDimensions,
    #[error("no scores for model {model} on dimension {dimension}")]
    MissingCell {
        model: String,
        dimension: DimensionId,
    },
}
