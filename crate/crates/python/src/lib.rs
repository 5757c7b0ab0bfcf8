//! Python bindings for the crack pre-localization pipeline.
//!
//! Volumes cross the boundary as flat x-fastest buffers: `bytes` of
//! little-endian `f32` for gray volumes and of `0/1` bytes for masks, which
//! `numpy.frombuffer(..).reshape(nz, ny, nx)` views without copying.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use crackscan::metrics;
use crackscan::multitest::{self, NullMeta};
use crackscan::phantom::{self, PhantomSpec};
use crackscan::pipeline::{self, PipelineConfig, Timings};
use crackscan::volume;
use crackscan::{Dims, Error};

create_exception!(
    crackscan_py,
    CalibrationError,
    PyRuntimeError,
    "Null metadata does not match the query."
);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Parameter(_) | Error::Config { .. } | Error::Input(_) | Error::Json(_) => PyValueError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Calibration(_) => CalibrationError::new_err(msg),
        Error::Numeric(_) => PyRuntimeError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for crackscan::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn dims_of(d: (usize, usize, usize)) -> PyResult<Dims> {
    Dims::new(d.0, d.1, d.2).py_err()
}

fn dims_tuple(d: Dims) -> (usize, usize, usize) {
    (d.nx, d.ny, d.nz)
}

/// Gray-value volume with samples in x-fastest order.
#[pyclass(name = "ScalarVolume", module = "crackscan_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyScalarVolume(pub crackscan::ScalarVolume);

#[pymethods]
impl PyScalarVolume {
    /// `data` is a flat sequence of `nx * ny * nz` floats.
    #[new]
    fn new(dims: (usize, usize, usize), data: Vec<f32>) -> PyResult<Self> {
        Ok(PyScalarVolume(
            crackscan::ScalarVolume::new(dims_of(dims)?, data).py_err()?,
        ))
    }

    /// From little-endian `f32` bytes.
    #[staticmethod]
    fn from_bytes(dims: (usize, usize, usize), data: &[u8]) -> PyResult<Self> {
        if !data.len().is_multiple_of(4) {
            return Err(PyValueError::new_err("byte length is not a multiple of 4"));
        }
        let v = data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(dims, v)
    }

    /// Raw file with its JSON sidecar.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyScalarVolume(volume::read_scalar(&path).py_err()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        volume::write_scalar(&self.0, &path).py_err()
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        dims_tuple(self.0.dims())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn get(&self, x: usize, y: usize, z: usize) -> PyResult<f32> {
        check_coords(self.0.dims(), x, y, z)?;
        Ok(self.0.get(x, y, z))
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let bytes: Vec<u8> = self.0.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        PyBytes::new(py, &bytes)
    }

    fn tolist(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn mean_sd(&self) -> (f64, f64) {
        self.0.mean_sd()
    }

    fn normalize(&self) -> Self {
        PyScalarVolume(self.0.normalize())
    }

    fn __repr__(&self) -> String {
        let d = self.0.dims();
        format!("ScalarVolume({}x{}x{})", d.nx, d.ny, d.nz)
    }
}

fn check_coords(d: Dims, x: usize, y: usize, z: usize) -> PyResult<()> {
    if x >= d.nx || y >= d.ny || z >= d.nz {
        return Err(PyValueError::new_err(format!(
            "({x}, {y}, {z}) outside {}x{}x{}",
            d.nx, d.ny, d.nz
        )));
    }
    Ok(())
}

/// Binary mask; 1 marks crack.
#[pyclass(name = "BinaryVolume", module = "crackscan_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyBinaryVolume(pub crackscan::BinaryVolume);

#[pymethods]
impl PyBinaryVolume {
    /// `data` holds one 0/1 byte per voxel.
    #[new]
    fn new(dims: (usize, usize, usize), data: Vec<u8>) -> PyResult<Self> {
        Ok(PyBinaryVolume(
            crackscan::BinaryVolume::new(dims_of(dims)?, data).py_err()?,
        ))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyBinaryVolume(volume::read_binary(&path).py_err()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        volume::write_binary(&self.0, &path).py_err()
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize) {
        dims_tuple(self.0.dims())
    }

    fn __len__(&self) -> usize {
        self.0.data().len()
    }

    fn get(&self, x: usize, y: usize, z: usize) -> PyResult<bool> {
        check_coords(self.0.dims(), x, y, z)?;
        Ok(self.0.get(x, y, z))
    }

    fn count_ones(&self) -> usize {
        self.0.count_ones()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.data())
    }

    fn __repr__(&self) -> String {
        let d = self.0.dims();
        format!("BinaryVolume({}x{}x{}, ones={})", d.nx, d.ny, d.nz, self.0.count_ones())
    }
}

/// Per-cube raw and standardized `(a, b, c)` features on a `g^3` lattice.
#[pyclass(name = "FeatureGrid", module = "crackscan_py", frozen)]
pub struct PyFeatureGrid(pub crackscan::geometry::FeatureGrid);

#[pymethods]
impl PyFeatureGrid {
    #[getter]
    fn g(&self) -> usize {
        self.0.g
    }

    /// Raw features, cube `(qx, qy, qz)` at index `qx + g*(qy + g*qz)`.
    #[getter]
    fn raw(&self) -> Vec<[f64; 3]> {
        self.0.raw.clone()
    }

    #[getter]
    fn standardized(&self) -> Vec<[f64; 3]> {
        self.0.standardized.clone()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }
}

/// Sorted null sample of the scan statistic with its calibration metadata.
#[pyclass(name = "EmpiricalNull", module = "crackscan_py", frozen)]
pub struct PyEmpiricalNull(pub multitest::EmpiricalNull);

#[pymethods]
impl PyEmpiricalNull {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyEmpiricalNull(multitest::EmpiricalNull::read_csv(&path).py_err()?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_csv(&path).py_err()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    /// `{"g", "u", "norm", "config"}`.
    fn meta<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let m = &self.0.meta;
        let d = PyDict::new(py);
        d.set_item("g", m.g)?;
        d.set_item("u", m.u)?;
        d.set_item("norm", m.norm.to_string())?;
        d.set_item("config", &m.config)?;
        Ok(d)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }
}

/// Outcome of one detection run.
#[pyclass(name = "TestReport", module = "crackscan_py", frozen)]
pub struct PyTestReport(pub multitest::TestReport);

#[pymethods]
impl PyTestReport {
    /// 0-based window anchors.
    #[getter]
    fn anchors(&self) -> Vec<[usize; 3]> {
        self.0.windows.iter().map(|w| w.anchor).collect()
    }

    #[getter]
    fn statistics(&self) -> Vec<f64> {
        self.0.statistics.clone()
    }

    #[getter]
    fn pvalues(&self) -> Vec<f64> {
        self.0.pvalues.clone()
    }

    #[getter]
    fn rejected(&self) -> Vec<bool> {
        self.0.rejected.clone()
    }

    /// Flagged cubes on the `g^3` lattice.
    #[getter]
    fn cubes(&self) -> PyBinaryVolume {
        PyBinaryVolume(self.0.cubes.clone())
    }

    fn rejections(&self) -> usize {
        self.0.rejections()
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }
}

/// Resolved pipeline configuration; stages run in memory.
#[pyclass(name = "Pipeline", module = "crackscan_py", frozen)]
pub struct PyPipeline(PipelineConfig);

#[pymethods]
impl PyPipeline {
    /// `config` is a JSON document as accepted by the CLI; `overrides` are
    /// `key.path=value` strings applied on top.
    #[new]
    #[pyo3(signature = (config = "{}", overrides = Vec::new()))]
    fn new(config: &str, overrides: Vec<String>) -> PyResult<Self> {
        let tree: serde_json::Value = serde_json::from_str(config).map_err(|e| to_py(e.into()))?;
        Ok(PyPipeline(PipelineConfig::from_value(tree, &overrides).py_err()?))
    }

    /// The effective configuration as JSON.
    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.0).map_err(|e| to_py(e.into()))
    }

    #[getter]
    fn feature_hash(&self) -> String {
        self.0.feature_hash()
    }

    fn binarize(&self, py: Python<'_>, image: &PyScalarVolume) -> PyResult<PyBinaryVolume> {
        let m = py.detach(|| pipeline::binarize(&image.0, &self.0.filter)).py_err()?;
        Ok(PyBinaryVolume(m))
    }

    fn features(&self, py: Python<'_>, mask: &PyBinaryVolume) -> PyResult<PyFeatureGrid> {
        let g = self.0.grid.g;
        let f = py.detach(|| crackscan::geometry::feature_grid(&mask.0, g)).py_err()?;
        Ok(PyFeatureGrid(f))
    }

    /// Null from a crack-free volume.
    fn calibrate(&self, py: Python<'_>, image: &PyScalarVolume) -> PyResult<PyEmpiricalNull> {
        let cfg = &self.0;
        let null = py
            .detach(|| {
                pipeline::calibrate(
                    &image.0,
                    &cfg.filter,
                    &cfg.grid,
                    &cfg.feature_hash(),
                    &mut Timings::default(),
                )
            })
            .py_err()?;
        Ok(PyEmpiricalNull(null))
    }

    /// Returns `(report, mask, features)`.
    fn detect(
        &self,
        py: Python<'_>,
        image: &PyScalarVolume,
        null: &PyEmpiricalNull,
    ) -> PyResult<(PyTestReport, PyBinaryVolume, PyFeatureGrid)> {
        let cfg = &self.0;
        let d = py
            .detach(|| {
                pipeline::run_detect(
                    &image.0,
                    &cfg.filter,
                    &cfg.grid,
                    &cfg.test,
                    &null.0,
                    &cfg.feature_hash(),
                    &mut Timings::default(),
                )
            })
            .py_err()?;
        Ok((PyTestReport(d.report), PyBinaryVolume(d.mask), PyFeatureGrid(d.field)))
    }
}

/// Planar-crack phantom of side `size`, or a crack-free one. Returns `(image, truth)`.
#[pyfunction]
#[pyo3(signature = (size, width = 5.0, seed = 0, homogeneous = false))]
fn make_phantom(size: usize, width: f64, seed: u64, homogeneous: bool) -> PyResult<(PyScalarVolume, PyBinaryVolume)> {
    let spec = if homogeneous {
        PhantomSpec::homogeneous(size, seed)
    } else {
        PhantomSpec::planar_crack(size, width, seed)
    };
    generate_spec(&spec)
}

/// Phantom from a JSON spec with `dims`, `seed`, `mean`, `sd` and optional `crack`/`pores`.
#[pyfunction]
fn phantom_from_json(spec: &str) -> PyResult<(PyScalarVolume, PyBinaryVolume)> {
    let spec: PhantomSpec = serde_json::from_str(spec).map_err(|e| to_py(e.into()))?;
    generate_spec(&spec)
}

fn generate_spec(spec: &PhantomSpec) -> PyResult<(PyScalarVolume, PyBinaryVolume)> {
    let (img, truth) = phantom::generate(spec).py_err()?;
    Ok((PyScalarVolume(img), PyBinaryVolume(truth)))
}

#[pyfunction]
fn window_count(g: usize, u: usize) -> PyResult<usize> {
    Ok(multitest::enumerate_windows(g, u).py_err()?.len())
}

#[pyfunction]
fn benjamini_hochberg(pvalues: Vec<f64>, alpha: f64) -> PyResult<Vec<bool>> {
    multitest::benjamini_hochberg(&pvalues, alpha).py_err()
}

/// CUSUM statistic of the window with 0-based `anchor` and side `u`.
#[pyfunction]
#[pyo3(signature = (field, anchor, u, norm = "inf"))]
fn cusum(field: &PyFeatureGrid, anchor: [usize; 3], u: usize, norm: &str) -> PyResult<f64> {
    let norm = norm.parse().py_err()?;
    multitest::cusum(&field.0, &multitest::ScanWindow { anchor, u }, norm).py_err()
}

/// Null from an explicit sample, for tests and external calibration.
#[pyfunction]
#[pyo3(signature = (values, g, u, norm = "inf", config = ""))]
fn empirical_null(values: Vec<f64>, g: usize, u: usize, norm: &str, config: &str) -> PyResult<PyEmpiricalNull> {
    let meta = NullMeta {
        g,
        u,
        norm: norm.parse().py_err()?,
        config: config.to_string(),
    };
    Ok(PyEmpiricalNull(multitest::EmpiricalNull::new(meta, values).py_err()?))
}

/// Precision, recall, F1 and confusion counts of `pred` against `truth`.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, pred: &PyBinaryVolume, truth: &PyBinaryVolume) -> PyResult<Bound<'py, PyDict>> {
    let c = metrics::confusion(&pred.0, &truth.0).py_err()?;
    let s = metrics::prf1(&c);
    let d = PyDict::new(py);
    d.set_item("precision", s.precision)?;
    d.set_item("recall", s.recall)?;
    d.set_item("f1", s.f1)?;
    d.set_item("tp", c.tp)?;
    d.set_item("fp", c.fp)?;
    d.set_item("tn", c.tn)?;
    d.set_item("fn", c.fn_)?;
    Ok(d)
}

/// Cube-level truth: cubes holding at least `min_voxels` crack voxels.
#[pyfunction]
#[pyo3(signature = (truth, g, min_voxels = 1))]
fn cube_truth(truth: &PyBinaryVolume, g: usize, min_voxels: usize) -> PyResult<PyBinaryVolume> {
    Ok(PyBinaryVolume(metrics::cube_truth(&truth.0, g, min_voxels).py_err()?))
}

#[pyfunction]
fn f1_score(precision: f64, recall: f64) -> f64 {
    metrics::f1_of(precision, recall)
}

#[pymodule]
fn crackscan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("CalibrationError", m.py().get_type::<CalibrationError>())?;
    m.add_class::<PyScalarVolume>()?;
    m.add_class::<PyBinaryVolume>()?;
    m.add_class::<PyFeatureGrid>()?;
    m.add_class::<PyEmpiricalNull>()?;
    m.add_class::<PyTestReport>()?;
    m.add_class::<PyPipeline>()?;
    m.add_function(wrap_pyfunction!(make_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(phantom_from_json, m)?)?;
    m.add_function(wrap_pyfunction!(window_count, m)?)?;
    m.add_function(wrap_pyfunction!(benjamini_hochberg, m)?)?;
    m.add_function(wrap_pyfunction!(cusum, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_null, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(cube_truth, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    Ok(())
}
