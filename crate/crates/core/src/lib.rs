//! Pre-localization of cracks in large 3D CT volumes.
//!
//! The pipeline binarizes a gray-value volume with a cheap Hessian filter,
//! summarizes the mask cube by cube as a 3-variate feature field, and flags
//! cubes through CUSUM scan statistics over overlapping windows with
//! Benjamini-Hochberg multiple testing against an empirical null.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod components;
pub mod error;
pub mod geometry;
pub mod hessian;
pub mod metrics;
pub mod multitest;
pub mod percolation;
pub mod phantom;
pub mod pipeline;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Axis, BinaryVolume, Dims, SampleFormat, ScalarVolume};
