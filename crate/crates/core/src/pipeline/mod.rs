//! End-to-end orchestration of the detection pipeline.

pub mod commands;
pub mod config;
pub mod stages;

pub use config::{EvalConfig, FilterConfig, FilterKind, GridConfig, NullSource, PipelineConfig, Source, TestConfig};
pub use stages::{binarize, calibrate, field_of, run_detect, Detection, Timings};
