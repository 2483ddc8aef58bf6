//! Python bindings for `contraction_observer`.
//!
//! Matrices cross the boundary as lists of rows, vectors as lists of floats,
//! norm kinds as the strings `"one"`, `"two"` and `"inf"`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use contraction_observer::cli::resolve_gain;
use contraction_observer::norms::{self, Matrix, NormKind};
use contraction_observer::observer::{self, CertificateReport, CertifyOptions};
use contraction_observer::sim::{self, Trajectory};
use contraction_observer::{Error, TrafficScenario, TrafficSystem};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn norm_kind(s: &str) -> PyResult<NormKind> {
    s.parse().map_err(to_py)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

#[pyfunction]
fn vector_norm(v: Vec<f64>, norm: &str) -> PyResult<f64> {
    norms::vector_norm(&v, norm_kind(norm)?).map_err(to_py)
}

#[pyfunction]
fn induced_matrix_norm(a: Vec<Vec<f64>>, norm: &str) -> PyResult<f64> {
    norms::induced_matrix_norm(&matrix(a)?, norm_kind(norm)?).map_err(to_py)
}

#[pyfunction]
fn matrix_measure(a: Vec<Vec<f64>>, norm: &str) -> PyResult<f64> {
    norms::matrix_measure(&matrix(a)?, norm_kind(norm)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, norm, h = norms::DEFAULT_LIMIT_STEP))]
fn matrix_measure_limit_estimate(a: Vec<Vec<f64>>, norm: &str, h: f64) -> PyResult<f64> {
    norms::matrix_measure_limit_estimate(&matrix(a)?, norm_kind(norm)?, h).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, tol = norms::DEFAULT_METZLER_TOL))]
fn is_metzler(a: Vec<Vec<f64>>, tol: f64) -> PyResult<bool> {
    norms::is_metzler(&matrix(a)?, tol).map_err(to_py)
}

#[pyfunction]
fn error_bound(c: f64, e0: f64, t: f64) -> f64 {
    observer::error_bound(c, e0, t)
}

/// Compartmental freeway scenario.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario {
    inner: TrafficScenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn two_link() -> Self {
        PyScenario {
            inner: TrafficScenario::two_link(),
        }
    }

    #[staticmethod]
    fn five_link_sensed() -> Self {
        PyScenario {
            inner: TrafficScenario::five_link_sensed(),
        }
    }

    #[staticmethod]
    fn five_link_unsensed() -> Self {
        PyScenario {
            inner: TrafficScenario::five_link_unsensed(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: TrafficScenario::from_json_str(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: TrafficScenario::from_path(path).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    /// Returns `(value, [jacobian, ...])` with one Jacobian per active piece.
    fn rhs(&self, t: f64, x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<Vec<Vec<f64>>>)> {
        let ev = self.inner.traffic_rhs(t, &x).map_err(to_py)?;
        let jacs = ev.active_branch_jacobians().map(Matrix::to_rows).collect();
        Ok((ev.value.into_inner(), jacs))
    }

    /// 1-based link numbers with zero exit ratio.
    fn sensed_links(&self) -> Vec<usize> {
        self.inner.sensed_links().one_based()
    }

    fn observation(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.observation(&x).map_err(to_py)?.into_inner())
    }

    fn analytic_contraction_bound(&self) -> f64 {
        self.inner.analytic_contraction_bound()
    }

    fn mass_balance_residual(&self, t: f64, x: Vec<f64>, xdot: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.n() || xdot.len() != self.inner.n() {
            return Err(PyValueError::new_err(
                "state and derivative must have one entry per link",
            ));
        }
        Ok(self.inner.mass_balance_residual(t, &x, &xdot))
    }
}

#[pyclass(name = "Certificate", frozen)]
struct PyCertificate {
    inner: CertificateReport,
}

#[pymethods]
impl PyCertificate {
    #[getter]
    fn certified_c(&self) -> f64 {
        self.inner.certified_c
    }

    #[getter]
    fn worst_mu(&self) -> f64 {
        self.inner.worst_mu
    }

    #[getter]
    fn witness_point(&self) -> Vec<f64> {
        self.inner.witness_point.0.clone()
    }

    #[getter]
    fn strictly_contractive(&self) -> bool {
        self.inner.strictly_contractive
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }
}

#[pyfunction]
#[pyo3(signature = (scenario, norm = "one", gain = "identity_negative", grid = 9, samples = 1000, seed = 42))]
fn certify(
    scenario: &PyScenario,
    norm: &str,
    gain: &str,
    grid: usize,
    samples: usize,
    seed: u64,
) -> PyResult<PyCertificate> {
    let sys = TrafficSystem::new(scenario.inner.clone());
    let gain = resolve_gain(gain, &sys).map_err(to_py)?;
    let opts = CertifyOptions {
        grid_per_dim: grid,
        random_samples: samples,
        seed,
        ..CertifyOptions::default()
    };
    let inner =
        observer::certify_contraction(&sys, &gain, norm_kind(norm)?, &opts).map_err(to_py)?;
    Ok(PyCertificate { inner })
}

#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    inner: Trajectory,
    domain: contraction_observer::StateBox,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn states(&self) -> Vec<Vec<f64>> {
        self.inner.states.iter().map(|x| x.0.clone()).collect()
    }

    #[getter]
    fn estimates(&self) -> Option<Vec<Vec<f64>>> {
        self.inner
            .estimates
            .as_ref()
            .map(|es| es.iter().map(|x| x.0.clone()).collect())
    }

    #[getter]
    fn error_norms(&self) -> Option<Vec<f64>> {
        self.inner.error_norms.clone()
    }

    #[getter]
    fn clip_events(&self) -> usize {
        self.inner.clip_events
    }

    /// Returns `(max_ratio, holds)`.
    fn verify_error_bound(&self, c: f64) -> PyResult<(f64, bool)> {
        let r = sim::verify_error_bound(&self.inner, c).map_err(to_py)?;
        Ok((r.max_ratio, r.holds))
    }

    /// Returns `(max_violation, tolerance, holds)`.
    fn clarke_decay_check(&self, c: f64) -> PyResult<(f64, f64, bool)> {
        let r = sim::clarke_decay_check(&self.inner, c).map_err(to_py)?;
        Ok((r.max_violation, r.tolerance, r.holds))
    }

    #[pyo3(signature = (tol = 1e-9))]
    fn verify_box_invariance(&self, tol: f64) -> bool {
        sim::verify_box_invariance(&self.inner, &self.domain, tol)
    }
}

#[pyfunction]
#[pyo3(signature = (scenario, x0, xhat0, t1 = 25.0, dt = sim::DEFAULT_DT, norm = "one", gain = "identity_negative"))]
fn simulate(
    scenario: &PyScenario,
    x0: Vec<f64>,
    xhat0: Vec<f64>,
    t1: f64,
    dt: f64,
    norm: &str,
    gain: &str,
) -> PyResult<PyTrajectory> {
    let sys = TrafficSystem::new(scenario.inner.clone());
    let gain = resolve_gain(gain, &sys).map_err(to_py)?;
    let inner = sim::simulate_interconnection(&sys, &gain, &x0, &xhat0, t1, dt, norm_kind(norm)?)
        .map_err(to_py)?;
    Ok(PyTrajectory {
        inner,
        domain: scenario.inner.domain(),
    })
}

#[pymodule]
fn pycontraction(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(vector_norm, m)?)?;
    m.add_function(wrap_pyfunction!(induced_matrix_norm, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_measure, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_measure_limit_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(is_metzler, m)?)?;
    m.add_function(wrap_pyfunction!(error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyCertificate>()?;
    m.add_class::<PyTrajectory>()?;
    Ok(())
}
