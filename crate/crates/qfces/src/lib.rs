//! Command-line toolkit around the `qfces-core` library: dataset files,
//! run configuration, model backends, run directories, and the pipeline
//! stages (summary generation, format checks, judging, meta-evaluation,
//! agreement, and latency benchmarks).

pub mod benchrunner;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod gateway;
pub mod pipeline;
pub mod report;
pub mod store;

pub use qfces_core as core;
