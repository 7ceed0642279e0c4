//! Python bindings: `import tactile_cs`.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use tactile_core::compression::{self as cs, CompressedSignal};
use tactile_core::harness;
use tactile_core::learn::{self, LabeledSet, TrainSplit};
use tactile_core::recovery::{self, SparseCoeffs, WaveletBasis};
use tactile_core::simulator::{self as sim, Primitive};
use tactile_core::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Format { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn labeled(xs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<LabeledSet> {
    LabeledSet::new(xs, labels).map_err(err)
}

#[pyclass(name = "SphereModel", frozen)]
struct PySphereModel(sim::SphereModel);

#[pymethods]
impl PySphereModel {
    #[getter]
    fn name(&self) -> String {
        self.0.name().to_string()
    }

    /// `(x, y, z, radius)` per sphere.
    #[getter]
    fn spheres(&self) -> Vec<(f64, f64, f64, f64)> {
        self.0
            .spheres()
            .iter()
            .map(|s| (s.center[0], s.center[1], s.center[2], s.radius))
            .collect()
    }

    #[getter]
    fn top(&self) -> f64 {
        self.0.top()
    }

    fn __len__(&self) -> usize {
        self.0.spheres().len()
    }
}

/// `kind` is "box" (dims = x, y, z), "sphere" (radius) or "cylinder" (radius, height).
#[pyfunction]
fn make_primitive(name: &str, kind: &str, dims: Vec<f64>, spacing: f64) -> PyResult<PySphereModel> {
    let shape = match (kind, dims.as_slice()) {
        ("box", &[x, y, z]) => Primitive::Box { size: [x, y, z] },
        ("sphere", &[radius]) => Primitive::Sphere { radius },
        ("cylinder", &[radius, height]) => Primitive::Cylinder { radius, height },
        _ => {
            return Err(PyValueError::new_err(format!(
                "bad primitive {kind} with {} dims",
                dims.len()
            )))
        }
    };
    sim::make_primitive(name, &shape, spacing)
        .map(PySphereModel)
        .map_err(err)
}

#[pyfunction]
fn spheres_from_vertices(vertices: Vec<[f64; 3]>, name: &str) -> PyResult<PySphereModel> {
    sim::spheres_from_vertices(&vertices, name)
        .map(PySphereModel)
        .map_err(err)
}

#[pyclass(name = "TaxelArray", frozen)]
struct PyTaxelArray(sim::TaxelArray);

#[pymethods]
impl PyTaxelArray {
    #[new]
    #[pyo3(signature = (side, extent = sim::DEFAULT_EXTENT_MM, stiffness = sim::DEFAULT_STIFFNESS))]
    fn new(side: usize, extent: f64, stiffness: f64) -> PyResult<Self> {
        sim::TaxelArray::square(side, extent, stiffness)
            .map(PyTaxelArray)
            .map_err(err)
    }

    #[getter]
    fn rows(&self) -> usize {
        self.0.rows
    }

    #[getter]
    fn cols(&self) -> usize {
        self.0.cols
    }

    #[getter]
    fn pitch(&self) -> f64 {
        self.0.pitch
    }
}

#[pyclass(name = "TactileFrame", frozen)]
struct PyTactileFrame(sim::TactileFrame);

#[pymethods]
impl PyTactileFrame {
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }

    #[getter]
    fn noisy(&self) -> bool {
        self.0.noisy
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.array.rows, self.0.array.cols)
    }
}

#[pyfunction]
#[pyo3(signature = (array, model, offset_row = 0.0, offset_col = 0.0, rotation_deg = 0.0, press_depth = sim::DEFAULT_PRESS_DEPTH, seed = 0))]
fn simulate_touch(
    array: &PyTaxelArray,
    model: &PySphereModel,
    offset_row: f64,
    offset_col: f64,
    rotation_deg: f64,
    press_depth: f64,
    seed: u64,
) -> PyResult<PyTactileFrame> {
    let touch = sim::TouchConfig::new(offset_row, offset_col, rotation_deg, press_depth, seed)
        .map_err(err)?;
    sim::simulate_touch(&array.0, &model.0, &touch)
        .map(PyTactileFrame)
        .map_err(err)
}

#[pyfunction]
fn add_noise(frame: &PyTactileFrame, sigma: f64, seed: u64) -> PyResult<PyTactileFrame> {
    sim::add_noise(&frame.0, sigma, seed)
        .map(PyTactileFrame)
        .map_err(err)
}

#[pyclass(name = "SbheMatrix", frozen)]
struct PySbheMatrix(cs::SbheMatrix);

#[pymethods]
impl PySbheMatrix {
    #[new]
    #[pyo3(signature = (n, m, block_size = cs::DEFAULT_BLOCK_SIZE, seed = 0))]
    fn new(n: usize, m: usize, block_size: usize, seed: u64) -> PyResult<Self> {
        cs::SbheMatrix::build(n, m, block_size, seed)
            .map(PySbheMatrix)
            .map_err(err)
    }

    /// `Φx`.
    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.apply(&x).map_err(err)
    }

    /// `Φᵀy`.
    fn adjoint(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.apply_adjoint(&y).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    #[getter]
    fn compression_factor(&self) -> f64 {
        self.0.compression_factor()
    }
}

fn basis_for(n: usize) -> PyResult<WaveletBasis> {
    WaveletBasis::for_len(n).map_err(err)
}

/// Full-depth db2 analysis of a square image given row-major.
#[pyfunction]
fn dwt2(values: Vec<f64>) -> PyResult<Vec<f64>> {
    recovery::dwt2(&values, &basis_for(values.len())?)
        .map(|c| c.values)
        .map_err(err)
}

#[pyfunction]
fn idwt2(coeffs: Vec<f64>) -> PyResult<Vec<f64>> {
    let basis = basis_for(coeffs.len())?;
    recovery::idwt2(&SparseCoeffs::new(coeffs), &basis).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (y, matrix, k_max, tol = 1e-6))]
fn reconstruct(y: Vec<f64>, matrix: &PySbheMatrix, k_max: usize, tol: f64) -> PyResult<Vec<f64>> {
    let op = &matrix.0;
    let signal = CompressedSignal {
        values: y,
        matrix_seed: op.seed(),
        m: op.m(),
        n: op.n(),
        block_size: op.block_size(),
        label: 0,
    };
    recovery::reconstruct(&signal, op, &basis_for(op.n())?, k_max, tol)
        .map(|r| r.values)
        .map_err(err)
}

#[pyclass(name = "BinarySvm", frozen)]
struct PyBinarySvm(learn::BinarySvm);

#[pymethods]
impl PyBinarySvm {
    #[getter]
    fn w(&self) -> Vec<f64> {
        self.0.w.clone()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }

    #[getter]
    fn support_indices(&self) -> Vec<usize> {
        self.0.support_indices.clone()
    }

    fn decision(&self, x: Vec<f64>) -> f64 {
        self.0.decision(&x)
    }

    fn predict(&self, x: Vec<f64>) -> usize {
        self.0.predict(&x)
    }
}

#[pyfunction]
#[pyo3(signature = (xs, labels, c, tol = learn::DEFAULT_TOL))]
fn train_binary(xs: Vec<Vec<f64>>, labels: Vec<usize>, c: f64, tol: f64) -> PyResult<PyBinarySvm> {
    learn::train_binary(&labeled(xs, labels)?, c, tol)
        .map(PyBinarySvm)
        .map_err(err)
}

#[pyfunction]
fn hinge_loss(model: &PyBinarySvm, xs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    learn::hinge_loss(&model.0, &labeled(xs, labels)?).map_err(err)
}

#[pyclass(name = "DagSvm", frozen)]
struct PyDagSvm(learn::DagSvmModel);

#[pymethods]
impl PyDagSvm {
    #[staticmethod]
    #[pyo3(signature = (xs, labels, c_grid, development, validation, seed = 0, tol = learn::DEFAULT_TOL))]
    fn train(
        xs: Vec<Vec<f64>>,
        labels: Vec<usize>,
        c_grid: Vec<f64>,
        development: Vec<usize>,
        validation: Vec<usize>,
        seed: u64,
        tol: f64,
    ) -> PyResult<Self> {
        let split = TrainSplit {
            development,
            validation,
        };
        learn::train_dag(&labeled(xs, labels)?, &c_grid, &split, seed, tol)
            .map(PyDagSvm)
            .map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(PyDagSvm)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn classes(&self) -> Vec<usize> {
        self.0.class_list.clone()
    }

    #[getter]
    fn n_models(&self) -> usize {
        self.0.pairwise.len()
    }

    /// Binary evaluations made since creation or the last reset.
    #[getter]
    fn evaluations(&self) -> u64 {
        self.0.evaluations.get()
    }

    fn reset_evaluations(&self) {
        self.0.evaluations.reset()
    }

    fn classify(&self, x: Vec<f64>) -> PyResult<usize> {
        self.0.classify(&x).map_err(err)
    }

    /// `(accuracy_percent, confusion_row_percentages)`.
    fn evaluate(&self, xs: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<(f64, Vec<Vec<f64>>)> {
        let e = learn::evaluate(&self.0, &labeled(xs, labels)?).map_err(err)?;
        Ok((e.accuracy, e.confusion.percentages))
    }
}

/// Development, validation and test perturbation indices.
#[pyfunction]
fn make_splits(
    count: usize,
    development: f64,
    validation: f64,
    seed: u64,
) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let s = harness::make_splits(count, [development, validation], seed).map_err(err)?;
    Ok((s.development, s.validation, s.test))
}

#[pymodule]
fn tactile_cs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySphereModel>()?;
    m.add_class::<PyTaxelArray>()?;
    m.add_class::<PyTactileFrame>()?;
    m.add_class::<PySbheMatrix>()?;
    m.add_class::<PyBinarySvm>()?;
    m.add_class::<PyDagSvm>()?;
    m.add_function(wrap_pyfunction!(make_primitive, m)?)?;
    m.add_function(wrap_pyfunction!(spheres_from_vertices, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_touch, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(dwt2, m)?)?;
    m.add_function(wrap_pyfunction!(idwt2, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(train_binary, m)?)?;
    m.add_function(wrap_pyfunction!(hinge_loss, m)?)?;
    m.add_function(wrap_pyfunction!(make_splits, m)?)?;
    Ok(())
}
