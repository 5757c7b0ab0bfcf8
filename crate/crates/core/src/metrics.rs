//! Precision, recall and F1 of binary predictions, per voxel or per cube.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::geometry::CubePartition;
use crate::volume::{check_dims, BinaryVolume, Dims};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(pred: &BinaryVolume, truth: &BinaryVolume) -> Result<ConfusionCounts> {
    check_dims(pred.dims(), truth.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Ratios with empty denominators taken as 0.
pub fn prf1(c: &ConfusionCounts) -> Prf1 {
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Prf1 {
        precision,
        recall,
        f1: f1_of(precision, recall),
    }
}

pub fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Cube-level truth on the `g^3` lattice: a cube is crack when it holds at
/// least `min_voxels` truth voxels.
pub fn cube_truth(truth: &BinaryVolume, g: usize, min_voxels: usize) -> Result<BinaryVolume> {
    let part = CubePartition::new(truth.dims(), g)?;
    let dims = Dims::cube(g)?;
    let mut out = BinaryVolume::zeros(dims);
    for i in 0..part.num_cubes() {
        let q = part.cube_coords(i);
        let n = part.cube_of(truth, q).count_ones();
        out.set(q[0], q[1], q[2], n >= min_voxels.max(1));
    }
    Ok(out)
}

/// One CSV row of an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub stage: String,
    pub level: String,
    pub counts: ConfusionCounts,
    pub scores: Prf1,
}

impl MetricsRow {
    pub fn new(stage: &str, level: &str, pred: &BinaryVolume, truth: &BinaryVolume) -> Result<Self> {
        let counts = confusion(pred, truth)?;
        Ok(MetricsRow {
            stage: stage.into(),
            level: level.into(),
            counts,
            scores: prf1(&counts),
        })
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("stage,level,P,R,F1,TP,FP,TN,FN\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{},{},{},{}",
            r.stage,
            r.level,
            r.scores.precision,
            r.scores.recall,
            r.scores.f1,
            r.counts.tp,
            r.counts.fp,
            r.counts.tn,
            r.counts.fn_
        );
    }
    out
}
