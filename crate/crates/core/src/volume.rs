//! Dense 3D volumes, raw file I/O and slice export.
//!
//! Voxels are stored in a flat array with x varying fastest: the value at
//! `(x, y, z)` lives at `data[x + nx * (y + ny * z)]`. Raw files written by
//! this module use the same layout, little-endian, without a header. Each raw
//! file is accompanied by a JSON descriptor at `<raw path>.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::Input(format!(
                "volume dimensions must be positive, got {nx}x{ny}x{nz}"
            )));
        }
        Ok(Dims { nx, ny, nz })
    }

    pub fn cube(n: usize) -> Result<Self> {
        Dims::new(n, n, n)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let x = idx % self.nx;
        let rest = idx / self.nx;
        (x, rest % self.ny, rest / self.ny)
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn axis_len(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
            Axis::Z => self.nz,
        }
    }

    pub fn min_extent(&self) -> usize {
        self.nx.min(self.ny).min(self.nz)
    }

    fn check_same(&self, other: &Dims) -> Result<()> {
        if self != other {
            return Err(Error::Input(format!(
                "dimension mismatch: {}x{}x{} vs {}x{}x{}",
                self.nx, self.ny, self.nz, other.nx, other.ny, other.nz
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::Parameter(format!("unknown axis `{other}`"))),
        }
    }
}

/// Gray-value image with nominal range [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVolume {
    dims: Dims,
    data: Vec<f32>,
}

impl ScalarVolume {
    pub fn new(dims: Dims, data: Vec<f32>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::Input(format!(
                "data length {} does not match dims {dims} ({} voxels)",
                data.len(),
                dims.len()
            )));
        }
        Ok(ScalarVolume { dims, data })
    }

    pub fn filled(dims: Dims, value: f32) -> Self {
        ScalarVolume {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        ScalarVolume { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Affine min-max rescale to [0, 1]. Constant volumes map to all zeros.
    pub fn normalize(&self) -> ScalarVolume {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if !(hi > lo) {
            return ScalarVolume::filled(self.dims, 0.0);
        }
        let lo = lo as f64;
        let range = hi as f64 - lo;
        let data = self.data.iter().map(|&v| ((v as f64 - lo) / range) as f32).collect();
        ScalarVolume { dims: self.dims, data }
    }

    /// Voxelwise sample mean and sample standard deviation (denominator N-1).
    pub fn mean_sd(&self) -> (f64, f64) {
        crate::stats::mean_sd(self.data.iter().map(|&v| v as f64))
    }
}

/// Segmentation mask with values in {0, 1}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryVolume {
    dims: Dims,
    data: Vec<u8>,
}

impl BinaryVolume {
    pub fn new(dims: Dims, data: Vec<u8>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::Input(format!(
                "mask length {} does not match dims {dims}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Input(format!("mask value {bad} is not 0 or 1")));
        }
        Ok(BinaryVolume { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        BinaryVolume {
            dims,
            data: vec![0; dims.len()],
        }
    }

    pub fn ones(dims: Dims) -> Self {
        BinaryVolume {
            dims,
            data: vec![1; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z) as u8);
                }
            }
        }
        BinaryVolume { dims, data }
    }

    /// Builds a mask from a predicate evaluated on each flat element.
    pub(crate) fn from_flags(dims: Dims, flags: impl IntoIterator<Item = bool>) -> Self {
        let data: Vec<u8> = flags.into_iter().map(u8::from).collect();
        debug_assert_eq!(data.len(), dims.len());
        BinaryVolume { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.dims.index(x, y, z)] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.dims.index(x, y, z);
        self.data[i] = value as u8;
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Voxelwise union `self ∨ other`.
    pub fn union(&self, other: &BinaryVolume) -> Result<BinaryVolume> {
        self.dims.check_same(&other.dims)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a | b).collect();
        Ok(BinaryVolume { dims: self.dims, data })
    }

    pub fn to_scalar(&self) -> ScalarVolume {
        ScalarVolume {
            dims: self.dims,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Copies the axis-aligned block starting at `origin` with extent `size`.
    pub fn sub_block(&self, origin: [usize; 3], size: Dims) -> BinaryVolume {
        let mut data = Vec::with_capacity(size.len());
        for z in 0..size.nz {
            for y in 0..size.ny {
                let start = self.dims.index(origin[0], origin[1] + y, origin[2] + z);
                data.extend_from_slice(&self.data[start..start + size.nx]);
            }
        }
        BinaryVolume { dims: size, data }
    }
}

pub(crate) fn check_dims(a: Dims, b: Dims) -> Result<()> {
    a.check_same(&b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    U8,
    U16,
    F32,
}

impl SampleFormat {
    pub fn bytes_per_sample(self) -> usize {
        match self {
            SampleFormat::U8 => 1,
            SampleFormat::U16 => 2,
            SampleFormat::F32 => 4,
        }
    }
}

impl std::str::FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(SampleFormat::U8),
            "u16" => Ok(SampleFormat::U16),
            "f32" => Ok(SampleFormat::F32),
            other => Err(Error::Parameter(format!("unknown sample format `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    #[default]
    Scalar,
    /// `u8` samples restricted to {0, 1}.
    Binary,
}

/// Sidecar descriptor stored next to every raw file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeDescriptor {
    pub dims: [usize; 3],
    pub format: SampleFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<[f64; 3]>,
    #[serde(default)]
    pub kind: VolumeKind,
}

impl VolumeDescriptor {
    pub fn dims(&self) -> Result<Dims> {
        Dims::new(self.dims[0], self.dims[1], self.dims[2])
    }
}

pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Reads a headerless raw file. Integer samples are mapped to [0, 1]
/// (`v/255`, `v/65535`); `f32` samples are clamped to [0, 1].
pub fn load_raw(path: &Path, dims: Dims, format: SampleFormat) -> Result<ScalarVolume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = dims.len() * format.bytes_per_sample();
    if bytes.len() != expected {
        return Err(Error::Input(format!(
            "{}: file has {} bytes, expected {expected} for {dims} {format:?}",
            path.display(),
            bytes.len()
        )));
    }
    let data: Vec<f32> = match format {
        SampleFormat::U8 => bytes.iter().map(|&v| v as f32 / 255.0).collect(),
        SampleFormat::U16 => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32 / 65535.0)
            .collect(),
        SampleFormat::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]).clamp(0.0, 1.0))
            .collect(),
    };
    ScalarVolume::new(dims, data)
}

/// Writes the raw samples of `vol`. `f32` output is bit-exact; integer formats
/// quantize by rounding.
pub fn save_raw(vol: &ScalarVolume, path: &Path, format: SampleFormat) -> Result<()> {
    let mut out = Vec::with_capacity(vol.len() * format.bytes_per_sample());
    match format {
        SampleFormat::U8 => out.extend(vol.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)),
        SampleFormat::U16 => {
            for &v in vol.data() {
                let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
        SampleFormat::F32 => {
            for &v in vol.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    write_file(path, &out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_descriptor(raw: &Path, desc: &VolumeDescriptor) -> Result<()> {
    let json = serde_json::to_vec_pretty(desc)?;
    write_file(&sidecar_path(raw), &json)
}

pub fn read_descriptor(raw: &Path) -> Result<VolumeDescriptor> {
    let side = sidecar_path(raw);
    let bytes = fs::read(&side).map_err(|e| Error::io(&side, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Writes `vol` as raw `f32` plus its descriptor.
pub fn write_scalar(vol: &ScalarVolume, path: &Path) -> Result<()> {
    save_raw(vol, path, SampleFormat::F32)?;
    write_descriptor(
        path,
        &VolumeDescriptor {
            dims: vol.dims().as_array(),
            format: SampleFormat::F32,
            spacing: None,
            kind: VolumeKind::Scalar,
        },
    )
}

/// Writes `mask` as raw `u8` {0, 1} plus its descriptor.
pub fn write_binary(mask: &BinaryVolume, path: &Path) -> Result<()> {
    write_file(path, mask.data())?;
    write_descriptor(
        path,
        &VolumeDescriptor {
            dims: mask.dims().as_array(),
            format: SampleFormat::U8,
            spacing: None,
            kind: VolumeKind::Binary,
        },
    )
}

/// Reads a scalar volume through its descriptor.
pub fn read_scalar(path: &Path) -> Result<ScalarVolume> {
    let desc = read_descriptor(path)?;
    load_raw(path, desc.dims()?, desc.format)
}

/// Reads a mask through its descriptor. Scalar volumes are accepted and
/// binarized at 0.5.
pub fn read_binary(path: &Path) -> Result<BinaryVolume> {
    let desc = read_descriptor(path)?;
    let dims = desc.dims()?;
    match desc.kind {
        VolumeKind::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            if bytes.len() != dims.len() {
                return Err(Error::Input(format!(
                    "{}: mask has {} bytes, expected {}",
                    path.display(),
                    bytes.len(),
                    dims.len()
                )));
            }
            BinaryVolume::new(dims, bytes)
        }
        VolumeKind::Scalar => {
            let vol = load_raw(path, dims, desc.format)?;
            Ok(BinaryVolume::from_flags(dims, vol.data().iter().map(|&v| v >= 0.5)))
        }
    }
}

/// Anything that can be rendered as 8-bit gray.
pub trait SliceSource {
    fn dims(&self) -> Dims;
    fn gray_u8(&self, idx: usize) -> u8;
}

impl SliceSource for ScalarVolume {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn gray_u8(&self, idx: usize) -> u8 {
        (self.data[idx].clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

impl SliceSource for BinaryVolume {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn gray_u8(&self, idx: usize) -> u8 {
        if self.data[idx] != 0 {
            255
        } else {
            0
        }
    }
}

/// Extracts one axis-normal slice as `(width, height, pixels)`.
///
/// Z slices are indexed `(x, y)`, Y slices `(x, z)` and X slices `(y, z)`.
pub fn slice_pixels<V: SliceSource + ?Sized>(vol: &V, axis: Axis, index: usize) -> Result<(usize, usize, Vec<u8>)> {
    let d = vol.dims();
    let extent = d.axis_len(axis);
    if index >= extent {
        return Err(Error::Input(format!(
            "slice index {index} out of range for axis {axis:?} of length {extent}"
        )));
    }
    let (w, h) = match axis {
        Axis::X => (d.ny, d.nz),
        Axis::Y => (d.nx, d.nz),
        Axis::Z => (d.nx, d.ny),
    };
    let mut pixels = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let idx = match axis {
                Axis::X => d.index(index, u, v),
                Axis::Y => d.index(u, index, v),
                Axis::Z => d.index(u, v, index),
            };
            pixels.push(vol.gray_u8(idx));
        }
    }
    Ok((w, h, pixels))
}

/// Writes one slice as a binary PGM (P5). Binary volumes map 1 to 255.
pub fn export_slice<V: SliceSource + ?Sized>(vol: &V, axis: Axis, index: usize, path: &Path) -> Result<()> {
    let (w, h, pixels) = slice_pixels(vol, axis, index)?;
    let mut out = Vec::with_capacity(pixels.len() + 32);
    write!(out, "P5\n{w} {h}\n255\n").expect("writing to a Vec cannot fail");
    out.extend_from_slice(&pixels);
    write_file(path, &out)
}
