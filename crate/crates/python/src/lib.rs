//! Python bindings for geoalign.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use geoalign::alignment::{AlignConfig, InitMode};
use geoalign::pipeline::{CompressionLevel, PipelineConfig, PipelineReport};
use geoalign::{Error, RigidTransform, WeightedPointSet};
use nalgebra::{DMatrix, DVector};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Numerical(_) => PyRuntimeError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(name = "PointSet", module = "pygeoalign", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPointSet(WeightedPointSet);

#[pymethods]
impl PyPointSet {
    /// Rows of coordinates and optional positive weights (default all one).
    #[new]
    #[pyo3(signature = (points, weights=None))]
    fn new(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let weights = weights.unwrap_or_else(|| vec![1.0; points.len()]);
        WeightedPointSet::from_rows(&points, weights).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        geoalign::read_point_set(path).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        geoalign::parse_point_set(text).map(Self).map_err(to_py)
    }

    #[pyo3(signature = (path, comment=None))]
    fn write(&self, path: &str, comment: Option<&str>) -> PyResult<()> {
        geoalign::write_point_set(path, &self.0, comment).map_err(to_py)
    }

    fn to_text(&self) -> String {
        geoalign::io::format_point_set(&self.0, None)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.0.points().map(|p| p.to_vec()).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    #[getter]
    fn total_weight(&self) -> f64 {
        self.0.total_weight()
    }

    fn diameter(&self) -> f64 {
        self.0.diameter()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("PointSet(n={}, dim={})", self.0.len(), self.0.dim())
    }
}

#[pyclass(name = "RigidTransform", module = "pygeoalign", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTransform(RigidTransform);

#[pymethods]
impl PyTransform {
    #[new]
    fn new(rotation: Vec<Vec<f64>>, translation: Vec<f64>) -> PyResult<Self> {
        let d = translation.len();
        if rotation.len() != d || rotation.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err(format!("rotation must be {d}x{d}")));
        }
        let r = DMatrix::from_fn(d, d, |i, j| rotation[i][j]);
        RigidTransform::new(r, DVector::from_vec(translation)).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn identity(dim: usize) -> Self {
        Self(RigidTransform::identity(dim))
    }

    #[getter]
    fn rotation(&self) -> Vec<Vec<f64>> {
        rows(self.0.rotation())
    }

    #[getter]
    fn translation(&self) -> Vec<f64> {
        self.0.translation().iter().copied().collect()
    }

    fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    fn apply(&self, set: &PyPointSet) -> PyResult<PyPointSet> {
        self.0.apply(&set.0).map(PyPointSet).map_err(to_py)
    }

    fn apply_point(&self, point: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.apply_point(&point).map_err(to_py)
    }

    fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// The transform applying `self` first and `next` second.
    fn then(&self, next: &Self) -> Self {
        Self(self.0.then(&next.0))
    }

    fn __repr__(&self) -> String {
        format!("RigidTransform(dim={})", self.0.dim())
    }
}

#[pyclass(name = "AlignmentResult", module = "pygeoalign", frozen, get_all)]
struct PyAlignment {
    transform: PyTransform,
    objective_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    rank_deficient: bool,
    emd: f64,
    flow: Vec<(usize, usize, f64)>,
}

#[pyclass(name = "PipelineReport", module = "pygeoalign", frozen, get_all)]
struct PyReport {
    transform: PyTransform,
    emd_full: f64,
    emd_compressed: f64,
    compressed_sizes: (usize, usize),
    compression_radii: (f64, f64),
    diameters: (f64, f64),
    epsilon_eff: f64,
    certificates_passed: bool,
    forward: (f64, f64),
    backward: (f64, f64),
    objective_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
    total_ms: f64,
}

impl From<PipelineReport> for PyReport {
    fn from(r: PipelineReport) -> Self {
        let c = r.certificates;
        Self {
            transform: PyTransform(r.transform),
            emd_full: r.emd_full,
            emd_compressed: r.emd_compressed,
            compressed_sizes: r.compressed_sizes,
            compression_radii: r.compression_radii,
            diameters: r.diameters,
            epsilon_eff: r.epsilon_eff,
            certificates_passed: c.holds(),
            forward: (c.forward_lhs, c.forward_rhs),
            backward: (c.backward_lhs, c.backward_rhs),
            objective_trace: r.objective_trace,
            iterations: r.iterations,
            converged: r.converged,
            total_ms: r.timings.total_ms,
        }
    }
}

fn align_config(tol: f64, max_iters: usize, init: &str, proper_rotations: bool) -> PyResult<AlignConfig> {
    let init_mode: InitMode = init.parse().map_err(to_py)?;
    let config = AlignConfig {
        tolerance: tol,
        max_iterations: max_iters,
        init_mode,
        proper_rotations_only: proper_rotations,
        ..AlignConfig::default()
    };
    config.validate().map_err(to_py)?;
    Ok(config)
}

/// Normalized EMD and its optimal plan as `(i, j, flow)` triples.
#[pyfunction]
fn solve_emd(py: Python<'_>, a: &PyPointSet, b: &PyPointSet) -> PyResult<(f64, Vec<(usize, usize, f64)>)> {
    let sol = py.detach(|| geoalign::solve_emd(&a.0, &b.0)).map_err(to_py)?;
    let flow = sol.plan.entries().iter().map(|e| (e.i, e.j, e.flow)).collect();
    Ok((sol.value, flow))
}

#[pyfunction]
#[pyo3(signature = (a, b, tol=1e-3, max_iters=100, init="centroid", proper_rotations=false))]
fn align(
    py: Python<'_>,
    a: &PyPointSet,
    b: &PyPointSet,
    tol: f64,
    max_iters: usize,
    init: &str,
    proper_rotations: bool,
) -> PyResult<PyAlignment> {
    let config = align_config(tol, max_iters, init, proper_rotations)?;
    let r = py.detach(|| geoalign::align(&a.0, &b.0, &config)).map_err(to_py)?;
    Ok(PyAlignment {
        emd: r.final_objective(),
        flow: r.flow.entries().iter().map(|e| (e.i, e.j, e.flow)).collect(),
        transform: PyTransform(r.transform),
        objective_trace: r.objective_trace,
        iterations: r.iterations,
        converged: r.converged,
        rank_deficient: r.rank_deficient,
    })
}

/// Compress both sides with k-center clustering, align the compressed sets
/// and report the EMD of the full sets under the resulting transform.
#[pyfunction]
#[pyo3(signature = (a, b, gamma=None, epsilon=None, rho=None, k=None, seed=0, tol=1e-3, max_iters=100, init="centroid", proper_rotations=false))]
#[allow(clippy::too_many_arguments)]
fn align_compressed(
    py: Python<'_>,
    a: &PyPointSet,
    b: &PyPointSet,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    rho: Option<f64>,
    k: Option<usize>,
    seed: u64,
    tol: f64,
    max_iters: usize,
    init: &str,
    proper_rotations: bool,
) -> PyResult<PyReport> {
    let level = match (gamma, epsilon, rho, k) {
        (Some(g), None, None, None) => CompressionLevel::Gamma(g),
        (None, Some(epsilon), Some(rho), None) => CompressionLevel::Epsilon { epsilon, rho },
        (None, None, None, Some(k)) => CompressionLevel::K(k),
        (None, None, None, None) => CompressionLevel::Gamma(1.0),
        _ => return Err(PyValueError::new_err("give one of gamma, epsilon with rho, or k")),
    };
    let config = PipelineConfig {
        level,
        k_override: None,
        seed,
        align: align_config(tol, max_iters, init, proper_rotations)?,
    };
    let report = py.detach(|| geoalign::align_compressed(&a.0, &b.0, &config)).map_err(to_py)?;
    Ok(report.into())
}

/// Gonzalez k-center clustering: `(centers, assignment, radius)`.
#[pyfunction]
#[pyo3(signature = (set, k, seed=0))]
fn gonzalez(set: &PyPointSet, k: usize, seed: u64) -> PyResult<(Vec<usize>, Vec<usize>, f64)> {
    let c = geoalign::gonzalez(&set.0, k, seed).map_err(to_py)?;
    Ok((c.centers().to_vec(), c.assignment().to_vec(), c.radius()))
}

/// Centers of a k-center clustering, each carrying its cluster's weight.
#[pyfunction]
#[pyo3(signature = (set, k, seed=0))]
fn compress(set: &PyPointSet, k: usize, seed: u64) -> PyResult<(PyPointSet, f64)> {
    let (small, c) = geoalign::compress(&set.0, k, seed).map_err(to_py)?;
    Ok((PyPointSet(small), c.radius()))
}

#[pyfunction]
fn compose(transforms: Vec<PyRef<'_, PyTransform>>) -> PyResult<PyTransform> {
    let ts: Vec<RigidTransform> = transforms.iter().map(|t| t.0.clone()).collect();
    geoalign::compose(&ts).map(PyTransform).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (latent_dim, ambient_dim, n1, n2, seed=0, degree=2))]
fn random_manifold_instance(
    latent_dim: usize,
    ambient_dim: usize,
    n1: usize,
    n2: usize,
    seed: u64,
    degree: u32,
) -> PyResult<(PyPointSet, PyPointSet)> {
    let spec = geoalign::ManifoldSpec {
        degree,
        ..geoalign::ManifoldSpec::new(latent_dim, ambient_dim, n1, n2, seed)
    };
    let (a, b) = geoalign::random_manifold_instance(&spec).map_err(to_py)?;
    Ok((PyPointSet(a), PyPointSet(b)))
}

#[pyfunction]
#[pyo3(signature = (rho, dim, n, seed=0))]
fn hypercube_instance(rho: usize, dim: usize, n: usize, seed: u64) -> PyResult<PyPointSet> {
    geoalign::hypercube_instance(rho, dim, n, seed).map(PyPointSet).map_err(to_py)
}

/// Gaussian noise with standard deviation `eta * diameter` per coordinate.
#[pyfunction]
#[pyo3(signature = (set, eta, seed=0))]
fn add_gaussian_noise(set: &PyPointSet, eta: f64, seed: u64) -> PyResult<PyPointSet> {
    geoalign::add_gaussian_noise(&set.0, eta, seed).map(PyPointSet).map_err(to_py)
}

#[pymodule]
fn pygeoalign(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPointSet>()?;
    m.add_class::<PyTransform>()?;
    m.add_class::<PyAlignment>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(solve_emd, m)?)?;
    m.add_function(wrap_pyfunction!(align, m)?)?;
    m.add_function(wrap_pyfunction!(align_compressed, m)?)?;
    m.add_function(wrap_pyfunction!(gonzalez, m)?)?;
    m.add_function(wrap_pyfunction!(compress, m)?)?;
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(random_manifold_instance, m)?)?;
    m.add_function(wrap_pyfunction!(hypercube_instance, m)?)?;
    m.add_function(wrap_pyfunction!(add_gaussian_noise, m)?)?;
    Ok(())
}
