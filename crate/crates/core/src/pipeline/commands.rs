//! File-based subcommands. Each writes its outputs under `cfg.output` plus a
//! `<command>.manifest.json` recording the resolved config, hashes, timings
//! and output digests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{NullSource, PipelineConfig, Source};
use super::stages::{self, Timings};
use crate::error::{Error, Result};
use crate::geometry::{feature_grid, CubePartition, FeatureGrid};
use crate::metrics::{cube_truth, metrics_csv, MetricsRow};
use crate::multitest::{EmpiricalNull, TestReport};
use crate::phantom::generate;
use crate::volume::{
    export_slice, load_raw, read_binary, read_descriptor, read_scalar, write_binary, write_scalar, Axis, BinaryVolume,
    Dims, ScalarVolume,
};

pub const IMAGE: &str = "image.raw";
pub const TRUTH: &str = "truth.raw";
pub const MASK: &str = "mask.raw";
pub const FEATURES: &str = "features.csv";
pub const NULL: &str = "null.csv";
pub const NULL_HIST: &str = "null_hist.csv";
pub const REPORT: &str = "report.csv";
pub const CUBES: &str = "cubes.raw";
pub const OVERLAY: &str = "overlay.raw";
pub const METRICS: &str = "metrics.csv";

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    feature_hash: String,
    config: &'a PipelineConfig,
    timings: &'a Timings,
    outputs: Vec<(String, String)>,
    warnings: &'a [String],
}

/// Collects outputs, timings and warnings of one command.
pub struct Run<'a> {
    pub cfg: &'a PipelineConfig,
    command: &'static str,
    pub timings: Timings,
    outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a PipelineConfig, command: &'static str) -> Result<Self> {
        std::fs::create_dir_all(&cfg.output).map_err(Error::at(&cfg.output))?;
        Ok(Run {
            cfg,
            command,
            timings: Timings::default(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.output.join(name)
    }

    fn record(&mut self, p: PathBuf) -> PathBuf {
        self.outputs.push(p.clone());
        if p.extension().is_some_and(|e| e == "raw") {
            let mut side = p.clone().into_os_string();
            side.push(".json");
            self.outputs.push(side.into());
        }
        p
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(Error::at(&p))?;
        Ok(self.record(p))
    }

    fn write_mask(&mut self, name: &str, m: &BinaryVolume) -> Result<PathBuf> {
        let p = self.path(name);
        write_binary(m, &p)?;
        Ok(self.record(p))
    }

    fn write_image(&mut self, name: &str, v: &ScalarVolume) -> Result<PathBuf> {
        let p = self.path(name);
        write_scalar(v, &p)?;
        Ok(self.record(p))
    }

    fn warn(&mut self, msg: String) {
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    /// Writes the manifest and returns the list of outputs.
    pub fn finish(self) -> Result<Vec<PathBuf>> {
        let mut outputs = Vec::new();
        for p in &self.outputs {
            let bytes = std::fs::read(p).map_err(Error::at(p))?;
            let name = p
                .file_name()
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            outputs.push((name, hex::encode(Sha256::digest(&bytes))));
        }
        let m = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: self.cfg.hash(),
            feature_hash: self.cfg.feature_hash(),
            config: self.cfg,
            timings: &self.timings,
            outputs,
            warnings: &self.warnings,
        };
        let p = self.path(&format!("{}.manifest.json", self.command));
        std::fs::write(&p, serde_json::to_vec_pretty(&m)?).map_err(Error::at(&p))?;
        let mut all = self.outputs;
        all.push(p);
        Ok(all)
    }
}

/// Gray volume of a source and, for phantoms, the crack truth.
pub fn load_source(src: &Source) -> Result<(ScalarVolume, Option<BinaryVolume>)> {
    match src {
        Source::Phantom(spec) => {
            let (img, truth) = generate(spec)?;
            Ok((img, Some(truth)))
        }
        Source::Path {
            path,
            dims,
            format,
            normalize,
        } => {
            let img = match (dims, format) {
                (Some(d), Some(f)) => load_raw(path, Dims::new(d[0], d[1], d[2])?, *f)?,
                (None, None) => read_scalar(path)?,
                (d, f) => {
                    let desc = read_descriptor(path).ok();
                    let dims = match (d, &desc) {
                        (Some(d), _) => Dims::new(d[0], d[1], d[2])?,
                        (None, Some(desc)) => desc.dims()?,
                        (None, None) => {
                            return Err(Error::config("input.path.dims", "dims missing and no sidecar found"))
                        }
                    };
                    let format = match (f, &desc) {
                        (Some(f), _) => *f,
                        (None, Some(desc)) => desc.format,
                        (None, None) => {
                            return Err(Error::config(
                                "input.path.format",
                                "format missing and no sidecar found",
                            ))
                        }
                    };
                    load_raw(path, dims, format)?
                }
            };
            Ok((if *normalize { img.normalize() } else { img }, None))
        }
    }
}

fn partition_warning(run: &mut Run, dims: Dims) -> Result<()> {
    let part = CubePartition::new(dims, run.cfg.grid.g).map_err(|e| Error::config("grid.g", e.to_string()))?;
    if let Some(w) = part.size_warning() {
        run.warn(w);
    }
    if part.remainder != [0; 3] {
        run.warn(format!("trimmed trailing voxels per axis: {:?}", part.remainder));
    }
    Ok(())
}

pub fn cmd_phantom(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let Source::Phantom(spec) = cfg.input()? else {
        return Err(Error::config(
            "input",
            "the phantom command needs an `input.phantom` spec",
        ));
    };
    let mut run = Run::new(cfg, "phantom")?;
    let (img, truth) = run.timings.time("generate", || generate(spec))?;
    run.write_image(IMAGE, &img)?;
    run.write_mask(TRUTH, &truth)?;
    run.write_text("phantom.json", &serde_json::to_string_pretty(spec)?)?;
    run.finish()
}

pub fn cmd_binarize(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(cfg, "binarize")?;
    let (img, _) = run.timings.time("load", || load_source(cfg.input()?))?;
    let mask = run.timings.time("binarize", || stages::binarize(&img, &cfg.filter))?;
    run.write_mask(MASK, &mask)?;
    run.finish()
}

/// Features of `mask` when given, otherwise of the binarized input.
pub fn cmd_features(cfg: &PipelineConfig, mask: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(cfg, "features")?;
    let mask = match mask {
        Some(p) => run.timings.time("load", || read_binary(p))?,
        None => {
            let (img, _) = run.timings.time("load", || load_source(cfg.input()?))?;
            run.timings.time("binarize", || stages::binarize(&img, &cfg.filter))?
        }
    };
    partition_warning(&mut run, mask.dims())?;
    let field = run.timings.time("features", || feature_grid(&mask, cfg.grid.g))?;
    run.write_text(FEATURES, &field.to_csv())?;
    run.finish()
}

fn calibration_source(cfg: &PipelineConfig) -> Result<&Source> {
    match &cfg.null {
        Some(NullSource::Volume(src)) => Ok(src),
        Some(NullSource::File(_)) => Err(Error::config("null", "calibrate needs `null.volume`, not a null file")),
        None => cfg
            .input
            .as_ref()
            .ok_or_else(|| Error::config("null", "no calibration volume (`null.volume` or `input`)")),
    }
}

fn calibrate_into(run: &mut Run, src: &Source) -> Result<EmpiricalNull> {
    let cfg = run.cfg;
    let (img, truth) = run.timings.time("load_null", || load_source(src))?;
    if truth.is_some_and(|t| t.count_ones() > 0) {
        run.warn("calibration phantom contains a crack".into());
    }
    partition_warning(run, img.dims())?;
    let hash = cfg.feature_hash();
    stages::calibrate(&img, &cfg.filter, &cfg.grid, &hash, &mut run.timings)
}

fn histogram_csv(null: &EmpiricalNull) -> String {
    let mut out = String::from("lower,upper,count\n");
    for (lo, hi, c) in null.histogram(40) {
        let _ = writeln!(out, "{lo},{hi},{c}");
    }
    out
}

pub fn cmd_calibrate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let mut run = Run::new(cfg, "calibrate")?;
    let null = calibrate_into(&mut run, calibration_source(cfg)?)?;
    run.write_text(NULL, &null.to_csv())?;
    run.write_text(NULL_HIST, &histogram_csv(&null))?;
    run.finish()
}

/// Paints each flagged cube over its voxels.
pub fn upsample(cubes: &BinaryVolume, dims: Dims, g: usize) -> Result<BinaryVolume> {
    let part = CubePartition::new(dims, g)?;
    let c = part.cube.as_array();
    Ok(BinaryVolume::from_fn(dims, |x, y, z| {
        let q = [x / c[0], y / c[1], z / c[2]];
        q.iter().all(|&v| v < g) && cubes.get(q[0], q[1], q[2])
    }))
}

/// Gray slice with flagged cubes brightened, for visual inspection.
fn overlay_image(img: &ScalarVolume, overlay: &BinaryVolume) -> ScalarVolume {
    let data = img
        .data()
        .iter()
        .zip(overlay.data())
        .map(|(&v, &o)| if o != 0 { 0.5 + 0.5 * v } else { 0.5 * v })
        .collect();
    ScalarVolume::new(img.dims(), data).expect("same length")
}

pub struct DetectOutcome {
    pub report: TestReport,
    pub field: FeatureGrid,
    pub files: Vec<PathBuf>,
}

pub fn cmd_detect(cfg: &PipelineConfig) -> Result<DetectOutcome> {
    let mut run = Run::new(cfg, "detect")?;
    let null = match &cfg.null {
        Some(NullSource::File(p)) => run.timings.time("load_null", || EmpiricalNull::read_csv(p))?,
        Some(NullSource::Volume(src)) => {
            let null = calibrate_into(&mut run, src)?;
            run.write_text(NULL, &null.to_csv())?;
            null
        }
        None => {
            return Err(Error::config(
                "null",
                "detect needs a null source (`null.file` or `null.volume`)",
            ))
        }
    };
    let (img, truth) = run.timings.time("load", || load_source(cfg.input()?))?;
    partition_warning(&mut run, img.dims())?;
    let hash = cfg.feature_hash();
    let det = stages::run_detect(&img, &cfg.filter, &cfg.grid, &cfg.test, &null, &hash, &mut run.timings)?;

    run.write_mask(MASK, &det.mask)?;
    run.write_text(FEATURES, &det.field.to_csv())?;
    run.write_text(REPORT, &det.report.to_csv())?;
    run.write_mask(CUBES, &det.report.cubes)?;
    let overlay = upsample(&det.report.cubes, img.dims(), cfg.grid.g)?;
    run.write_mask(OVERLAY, &overlay)?;
    if let Some(t) = &truth {
        run.write_mask(TRUTH, t)?;
    }
    let z = img.dims().nz / 2;
    for (name, vol) in [("slice", img.clone()), ("overlay", overlay_image(&img, &overlay))] {
        let p = run.path(&format!("{name}_z{z}.pgm"));
        export_slice(&vol, Axis::Z, z, &p)?;
        run.record(p);
    }
    let files = run.finish()?;
    Ok(DetectOutcome {
        report: det.report,
        field: det.field,
        files,
    })
}

/// Explicit evaluation inputs; absent entries default to files in `cfg.output`.
#[derive(Default)]
pub struct EvalInputs {
    pub mask: Option<PathBuf>,
    pub cubes: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

pub fn cmd_evaluate(cfg: &PipelineConfig, inputs: &EvalInputs) -> Result<(Vec<MetricsRow>, Vec<PathBuf>)> {
    let mut run = Run::new(cfg, "evaluate")?;
    let default = |p: &Option<PathBuf>, name: &str| p.clone().unwrap_or_else(|| cfg.output.join(name));
    let truth_path = default(&inputs.truth, TRUTH);
    let truth = if truth_path.exists() {
        read_binary(&truth_path)?
    } else if let Some(Source::Phantom(spec)) = &cfg.input {
        generate(spec)?.1
    } else {
        return Err(Error::Input(format!("truth mask {} not found", truth_path.display())));
    };
    let mut rows = Vec::new();
    let mask_path = default(&inputs.mask, MASK);
    if mask_path.exists() {
        let mask = read_binary(&mask_path)?;
        rows.push(MetricsRow::new(cfg.filter.name(), "voxel", &mask, &truth)?);
    }
    let cubes_path = default(&inputs.cubes, CUBES);
    if cubes_path.exists() {
        let cubes = read_binary(&cubes_path)?;
        let g = cubes.dims().nx;
        if cubes.dims() != Dims::cube(g)? {
            return Err(Error::Input(format!("{} is not a cube lattice", cubes_path.display())));
        }
        let ct = cube_truth(&truth, g, cfg.evaluation.min_truth_voxels)?;
        rows.push(MetricsRow::new("detect", "cube", &cubes, &ct)?);
    }
    if rows.is_empty() {
        return Err(Error::Input(
            "nothing to evaluate: no mask or cube decisions found".into(),
        ));
    }
    run.write_text(METRICS, &metrics_csv(&rows))?;
    let files = run.finish()?;
    Ok((rows, files))
}
