//! Python bindings. Matrices cross the boundary as lists of row lists, with
//! `None` for missing cells; structured results come back as dicts.

use cellrobust::breakdown::{self, LocationEstimator};
use cellrobust::ca::{self, ContingencyTable, KChoice, RobustPcaOptions};
use cellrobust::detect::{self, DdcOptions, Detector, DEFAULT_CUTOFF};
use cellrobust::estimate::{self, CovMethod, EmOptions, LocationKind};
use cellrobust::linalg::mahalanobis_sq;
use cellrobust::regress::{ar_fit, plugin_regression};
use cellrobust::univar::RobustScaleKind;
use cellrobust::{io, DataMatrix};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: cellrobust::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Hand a serializable value to Python through `json.loads`.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn data(rows: Vec<Vec<Option<f64>>>) -> PyResult<DataMatrix> {
    DataMatrix::from_rows(&rows).map_err(err)
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n == 0 || d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn detector(method: &str, cutoff: f64) -> PyResult<Detector> {
    match method {
        "ddc" => Ok(Detector::Ddc(DdcOptions {
            cutoff,
            ..DdcOptions::default()
        })),
        "univariate" => Ok(Detector::Univariate { cutoff }),
        other => Err(PyValueError::new_err(format!("unknown detector '{other}'"))),
    }
}

fn cov_method(name: &str, det: &str, cutoff: f64) -> PyResult<CovMethod> {
    match name {
        "classical" => Ok(CovMethod::Classical),
        "twostep" => Ok(CovMethod::TwoStep(detector(det, cutoff)?)),
        "pairwise" => Ok(CovMethod::Pairwise(RobustScaleKind::Mad)),
        other => Err(PyValueError::new_err(format!("unknown covariance method '{other}'"))),
    }
}

/// Location vector and scatter matrix.
#[pyclass(name = "CovModel", module = "cellrobust_py", from_py_object)]
#[derive(Clone)]
struct PyCovModel {
    inner: estimate::CovModel,
}

#[pymethods]
impl PyCovModel {
    #[new]
    fn new(mu: Vec<f64>, sigma: Vec<Vec<f64>>) -> PyResult<Self> {
        let sigma = matrix(&sigma)?;
        if sigma.shape() != (mu.len(), mu.len()) {
            return Err(PyValueError::new_err("sigma must be d x d for a length-d mu"));
        }
        Ok(Self {
            inner: estimate::CovModel::new(mu, sigma, "user"),
        })
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu.clone()
    }

    #[getter]
    fn sigma(&self) -> Vec<Vec<Option<f64>>> {
        io::matrix_rows(&self.inner.sigma)
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.clone()
    }

    fn mahalanobis_sq(&self, x: Vec<f64>) -> PyResult<f64> {
        mahalanobis_sq(&x, &self.inner).map_err(err)
    }

    /// Plug-in regression of variable `response` on the others.
    #[pyo3(signature = (response, intercept = true))]
    fn regress<'py>(&self, py: Python<'py>, response: usize, intercept: bool) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &plugin_regression(&self.inner, response, intercept).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("CovModel(method={:?}, d={})", self.inner.method, self.inner.dim())
    }
}

#[pyfunction]
#[pyo3(signature = (x, method = "ddc", cutoff = DEFAULT_CUTOFF))]
fn detect_cells<'py>(py: Python<'py>, x: Vec<Vec<Option<f64>>>, method: &str, cutoff: f64) -> PyResult<Bound<'py, PyAny>> {
    let flags = detect::run(&data(x)?, &detector(method, cutoff)?).map_err(err)?;
    to_py(py, &flags)
}

/// Fit a covariance model: `classical`, `twostep` or `pairwise`.
#[pyfunction]
#[pyo3(signature = (x, method = "twostep", detector = "ddc", cutoff = DEFAULT_CUTOFF))]
fn estimate_cov(x: Vec<Vec<Option<f64>>>, method: &str, detector: &str, cutoff: f64) -> PyResult<PyCovModel> {
    let x = data(x)?;
    let inner = match cov_method(method, detector, cutoff)? {
        CovMethod::TwoStep(det) => estimate::two_step_cov(&x, &det, &EmOptions::default()),
        m => m.fit(&x),
    }
    .map_err(err)?;
    Ok(PyCovModel { inner })
}

/// Location only: `coordmedian`, `coordmcd` or `spatialmedian`.
#[pyfunction]
#[pyo3(signature = (x, method = "spatialmedian"))]
fn estimate_location(x: Vec<Vec<Option<f64>>>, method: &str) -> PyResult<Vec<f64>> {
    let x = data(x)?;
    match method {
        "coordmedian" => estimate::coordwise_location(&x, LocationKind::Median),
        "coordmcd" => estimate::coordwise_location(&x, LocationKind::UnivMcd { alpha: 0.5 }),
        "spatialmedian" => estimate::spatial_median(&x, 1e-10, 10_000),
        other => return Err(PyValueError::new_err(format!("unknown location method '{other}'"))),
    }
    .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (y, order, cov = "classical", intercept = true))]
fn arfit<'py>(py: Python<'py>, y: Vec<f64>, order: usize, cov: &str, intercept: bool) -> PyResult<Bound<'py, PyAny>> {
    let method = cov_method(cov, "ddc", DEFAULT_CUTOFF)?;
    to_py(py, &ar_fit(&y, order, &method, intercept).map_err(err)?)
}

#[pyfunction]
fn contamination_probability(eps: f64, d: u32) -> f64 {
    breakdown::contamination_probability(eps, d)
}

/// Mean norm curves; returns `{"k": [...], "<estimator>": [...]}`.
#[pyfunction]
#[pyo3(signature = (n = 100, d = 4, value = 500.0, reps = 200, seed = 0, estimators = None))]
fn breakdown_curve<'py>(
    py: Python<'py>,
    n: usize,
    d: usize,
    value: f64,
    reps: usize,
    seed: u64,
    estimators: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let ests = match estimators {
        Some(names) => names
            .iter()
            .map(|s| LocationEstimator::parse(s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?,
        None => LocationEstimator::ALL.to_vec(),
    };
    let curve = py
        .detach(|| breakdown::breakdown_curve(&ests, n, d, value, reps, seed))
        .map_err(err)?;
    let mut out = serde_json::Map::new();
    out.insert("k".into(), serde_json::json!(curve.k));
    for (e, norms) in ests.iter().zip(&curve.norms) {
        out.insert(e.name().into(), serde_json::json!(norms));
    }
    to_py(py, &out)
}

/// Apply a breakdown construction: `location`, `implosion` or `regression`.
#[pyfunction]
#[pyo3(signature = (x, kind, c = 1e6, beta0 = 1e6))]
fn attack<'py>(py: Python<'py>, x: Vec<Vec<Option<f64>>>, kind: &str, c: f64, beta0: f64) -> PyResult<Bound<'py, PyAny>> {
    let x = data(x)?;
    let res = match kind {
        "location" => breakdown::hyperplane_attack_location(&x, c),
        "implosion" => breakdown::implosion_attack(&x),
        "regression" => breakdown::regression_attack(&x, beta0),
        other => return Err(PyValueError::new_err(format!("unknown attack '{other}'"))),
    }
    .map_err(err)?;
    to_py(py, &res)
}

/// Correspondence analysis of a count table; `k` is an int or `"auto"`.
#[pyfunction]
#[pyo3(signature = (counts, method = "classical", k = None, cutoff = DEFAULT_CUTOFF))]
fn correspondence<'py>(
    py: Python<'py>,
    counts: Vec<Vec<f64>>,
    method: &str,
    k: Option<usize>,
    cutoff: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let t = ContingencyTable::new(matrix(&counts)?).map_err(err)?;
    let k = k.map_or(KChoice::Auto, KChoice::Fixed);
    let sol = match method {
        "classical" => ca::classical_ca(&t, k),
        "robust" => ca::robust_ca(
            &t,
            &RobustPcaOptions {
                k,
                cutoff,
                ..Default::default()
            },
        ),
        other => return Err(PyValueError::new_err(format!("unknown CA method '{other}'"))),
    }
    .map_err(err)?;
    to_py(py, &sol)
}

#[pymodule]
fn cellrobust_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCovModel>()?;
    m.add_function(wrap_pyfunction!(detect_cells, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_cov, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_location, m)?)?;
    m.add_function(wrap_pyfunction!(arfit, m)?)?;
    m.add_function(wrap_pyfunction!(contamination_probability, m)?)?;
    m.add_function(wrap_pyfunction!(breakdown_curve, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(correspondence, m)?)?;
    m.add("DEFAULT_CUTOFF", DEFAULT_CUTOFF)?;
    Ok(())
}
