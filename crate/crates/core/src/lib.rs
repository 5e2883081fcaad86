//! Core algorithms for query-focused comparative product summaries.
//!
//! This crate holds everything that does not need an operating system:
//! the query-to-product data model and dataset statistics, prompt
//! rendering for generation and judge evaluation, the pipe-table parser
//! and format checker for comparative summaries, probability-weighted
//! judge scoring, rank-correlation / inter-rater agreement statistics,
//! and the deterministic mock completion model used for testing.
//!
//! IO, HTTP backends, timing, and the CLI live in the companion `qfces`
//! crate. Everything here is `no_std`-compatible (with `alloc`); enable
//! the default `std` feature for `std::error::Error` integration.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bench;
pub mod catalog;
pub mod ces;
pub mod judge;
pub mod metaeval;
pub mod mock;
pub mod prompt;
pub mod request;
pub mod template;
pub mod text;

pub use catalog::{Dataset, DatasetStats, Price, ProductRecord, QueryInstance, Review, SpecEntry};
pub use prompt::{CesMode, DimensionId, RenderedPrompt};
pub use request::{CompletionRequest, CompletionResult, SamplingParams};
