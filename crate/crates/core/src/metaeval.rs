//! Meta-evaluation statistics.
//!
//! Everything needed to compare automatic judge scores against human
//! ratings and to quantify how much the humans agree with each other:
//!
//! * [`rank`] — Spearman's rho, Kendall's tau-b, and permutation p-values;
//! * [`summary`] — per-query correlation of two metrics over candidate
//!   summaries, averaged across queries;
//! * [`alpha`] — Krippendorff's alpha inter-rater agreement;
//! * [`annotation`] — Likert rating records, the two-round discrepancy
//!   protocol, and rater-vs-rater correlation tables.

pub mod alpha;
pub mod annotation;
pub mod rank;
pub mod summary;
