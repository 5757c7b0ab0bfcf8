//! In-memory pipeline stages: binarize, features, calibrate, detect.

use std::time::Instant;

use super::config::{FilterConfig, FilterKind, GridConfig, TestConfig};
use crate::error::Result;
use crate::geometry::{feature_grid, FeatureGrid};
use crate::hessian::{multiscale_frangi, multiscale_mhe, multiscale_sheet, three_sigma_binarize};
use crate::multitest::{build_null, detect, EmpiricalNull, NullMeta, TestReport};
use crate::percolation::hessian_percolation;
use crate::volume::{BinaryVolume, ScalarVolume};

/// Wall-clock seconds per named stage, in execution order.
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct Timings(pub Vec<(String, f64)>);

impl Timings {
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.0.push((name.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().map(|(_, s)| s).sum()
    }
}

pub fn binarize(img: &ScalarVolume, filter: &FilterConfig) -> Result<BinaryVolume> {
    let scales = &filter.scales;
    match filter.kind {
        FilterKind::Mhe => multiscale_mhe(img, scales),
        FilterKind::Frangi => Ok(three_sigma_binarize(&multiscale_frangi(img, scales, &filter.frangi)?)),
        FilterKind::Sheet => Ok(three_sigma_binarize(&multiscale_sheet(img, scales, &filter.sheet)?)),
        FilterKind::Percolation => {
            let seeds = multiscale_mhe(img, scales)?;
            hessian_percolation(img, &seeds, &filter.percolation)
        }
    }
}

pub fn null_meta(grid: &GridConfig, feature_hash: &str) -> NullMeta {
    NullMeta {
        g: grid.g,
        u: grid.u,
        norm: grid.norm,
        config: feature_hash.to_string(),
    }
}

/// Binarization and feature field of one volume.
pub fn field_of(
    img: &ScalarVolume,
    filter: &FilterConfig,
    g: usize,
    timings: &mut Timings,
) -> Result<(BinaryVolume, FeatureGrid)> {
    let mask = timings.time("binarize", || binarize(img, filter))?;
    let field = timings.time("features", || feature_grid(&mask, g))?;
    Ok((mask, field))
}

/// Null distribution from a crack-free volume.
pub fn calibrate(
    img: &ScalarVolume,
    filter: &FilterConfig,
    grid: &GridConfig,
    feature_hash: &str,
    timings: &mut Timings,
) -> Result<EmpiricalNull> {
    let (_, field) = field_of(img, filter, grid.g, timings)?;
    timings.time("calibrate", || build_null(&field, grid.u, grid.norm, feature_hash))
}

pub struct Detection {
    pub mask: BinaryVolume,
    pub field: FeatureGrid,
    pub report: TestReport,
}

pub fn run_detect(
    img: &ScalarVolume,
    filter: &FilterConfig,
    grid: &GridConfig,
    test: &TestConfig,
    null: &EmpiricalNull,
    feature_hash: &str,
    timings: &mut Timings,
) -> Result<Detection> {
    let (mask, field) = field_of(img, filter, grid.g, timings)?;
    let meta = null_meta(grid, feature_hash);
    let report = timings.time("detect", || detect(&field, null, &meta, test.alpha, test.pvalue))?;
    Ok(Detection { mask, field, report })
}
