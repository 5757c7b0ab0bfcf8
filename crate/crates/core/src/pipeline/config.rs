//! Declarative run configuration, read from JSON with dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hessian::{FrangiParams, ScaleSet, SheetParams};
use crate::multitest::{Norm, PValueRule};
use crate::percolation::PercolationParams;
use crate::phantom::PhantomSpec;
use crate::volume::SampleFormat;

/// A volume on disk or a phantom generated on the fly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    /// Raw file; `dims` and `format` fall back to the JSON sidecar.
    Path {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dims: Option<[usize; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<SampleFormat>,
        /// Min-max rescale to [0, 1] after loading.
        #[serde(default)]
        normalize: bool,
    },
    Phantom(PhantomSpec),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// Union of 3-sigma binarized maximal-Hessian-entry responses.
    #[default]
    Mhe,
    /// 3-sigma threshold of the multiscale Frangi response.
    Frangi,
    /// 3-sigma threshold of the multiscale sheet response.
    Sheet,
    /// Region growing seeded by the MHE mask.
    Percolation,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Mhe => "mhe",
            FilterKind::Frangi => "frangi",
            FilterKind::Sheet => "sheet",
            FilterKind::Percolation => "percolation",
        }
    }
}

/// Filter choice; only the parameter block of the chosen kind is used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub scales: ScaleSet,
    pub frangi: FrangiParams,
    pub sheet: SheetParams,
    pub percolation: PercolationParams,
}

impl FilterConfig {
    pub fn mhe(scales: ScaleSet) -> Self {
        FilterConfig {
            scales,
            ..Default::default()
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    /// The settings that influence the output: kind, scales and the active block.
    pub fn effective(&self) -> Value {
        let params = match self.kind {
            FilterKind::Mhe => Value::Null,
            FilterKind::Frangi => serde_json::to_value(self.frangi).expect("serializes"),
            FilterKind::Sheet => serde_json::to_value(self.sheet).expect("serializes"),
            FilterKind::Percolation => serde_json::to_value(self.percolation).expect("serializes"),
        };
        serde_json::json!({ "kind": self.kind, "scales": self.scales, "params": params })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub g: usize,
    pub u: usize,
    pub norm: Norm,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            g: 16,
            u: 3,
            norm: Norm::Max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub alpha: f64,
    pub pvalue: PValueRule,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.5,
            pvalue: PValueRule::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Truth voxels needed for a cube to count as crack.
    pub min_truth_voxels: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { min_truth_voxels: 1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Source>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub test: TestConfig,
    /// Calibration source: a null CSV or a crack-free volume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null: Option<NullSource>,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NullSource {
    /// Previously calibrated null written by `calibrate`.
    File(PathBuf),
    /// Crack-free volume run through the same binarize and features stages.
    Volume(Source),
}

impl PipelineConfig {
    /// Parses a JSON tree, applying `key.path=value` overrides first.
    pub fn from_value(mut tree: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: PipelineConfig = serde_path_to_error::deserialize(tree).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." { String::new() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(Error::at(p))?;
                serde_json::from_str(&text).map_err(|e| Error::config("", format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        PipelineConfig::from_value(tree, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let GridConfig { g, u, .. } = self.grid;
        if g < 2 {
            return Err(Error::config("grid.g", format!("must be >= 2, got {g}")));
        }
        if u < 1 || u > g {
            return Err(Error::config("grid.u", format!("must lie in 1..=g ({g}), got {u}")));
        }
        if u == g {
            return Err(Error::config(
                "grid.u",
                "a window covering the whole grid has no complement",
            ));
        }
        if !(self.test.alpha > 0.0 && self.test.alpha < 1.0) {
            return Err(Error::config(
                "test.alpha",
                format!("must lie in (0, 1), got {}", self.test.alpha),
            ));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be >= 1"));
        }
        let check = |field: &str, r: Result<()>| r.map_err(|e| Error::config(field, e.to_string()));
        match self.filter.kind {
            FilterKind::Mhe => {}
            FilterKind::Frangi => check("filter.frangi", self.filter.frangi.validate())?,
            FilterKind::Sheet => check("filter.sheet", self.filter.sheet.validate())?,
            FilterKind::Percolation => check("filter.percolation", self.filter.percolation.validate())?,
        }
        if let Some(Source::Phantom(s)) = &self.input {
            check("input.phantom", s.validate())?;
        }
        if let Some(NullSource::Volume(Source::Phantom(s))) = &self.null {
            check("null.volume.phantom", s.validate())?;
        }
        Ok(())
    }

    pub fn input(&self) -> Result<&Source> {
        self.input
            .as_ref()
            .ok_or_else(|| Error::config("input", "no input volume configured"))
    }

    /// Hash of everything that shapes the feature field: the filter and `g`.
    pub fn feature_hash(&self) -> String {
        let v = serde_json::json!({ "filter": self.filter.effective(), "g": self.grid.g });
        short_hash(&v)
    }

    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_value(self).expect("config serializes"))
    }
}

/// First 16 hex digits of the SHA-256 of the canonical JSON text.
pub fn short_hash(v: &Value) -> String {
    // serde_json maps are ordered by key, so the text is canonical.
    let text = serde_json::to_string(v).expect("value serializes");
    hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
}

/// `a.b.c=value`; the value is parsed as JSON and taken as a string otherwise.
pub fn apply_override(tree: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key.path=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(key, "empty path segment"));
        }
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
