//! Whitespace tokenization and rounding helpers shared across the crate.
//!
//! A "word" is a maximal run of non-whitespace characters after trimming;
//! punctuation is retained. Token estimates everywhere in the pipeline use
//! this same rule so that prompt sizes, dataset statistics, and the mock
//! backend's latency model are mutually consistent.

use alloc::string::String;

/// Number of whitespace-delimited words in `s`.
pub fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Joins whitespace-delimited words back with single spaces.
///
/// Used when concatenating specification `name value` pairs so that
/// internal runs of whitespace do not inflate word counts.
pub fn normalize_spaces(s: &str) -> String {
    let mut out = String::new();
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Rounds to `decimals` places with ties going to the even digit.
///
/// Only used at report-rendering time; all internal arithmetic keeps full
/// precision.
pub fn round_half_even(value: f64, decimals: u32) -> f64 {
    let scale = libm::pow(10.0, decimals as f64);
    libm::rint(value * scale) / scale
}
