//! Python bindings for `vacq`.
//!
//! Matrices come back as lists of rows, states as `(level, phase)` tuples
//! and records as dicts. Errors map to `ValueError` for bad arguments,
//! `UnstableError` when the queue has no stationary regime and `VacqError`
//! for everything else.

use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vacq::analysis::{self, FivePhase};
use vacq::model::{self, State};
use vacq::oracles::{self, SimulationConfig};
use vacq::qbd::{self, SolverOptions};
use vacq::{stability, Error};

create_exception!(vacq_py, VacqError, PyRuntimeError, "Solver failure.");
create_exception!(
    vacq_py,
    UnstableError,
    VacqError,
    "The queue is not stable."
);

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InvalidParameter(_)
        | Error::TooFewPhases(_)
        | Error::NonMonotoneDecay(_)
        | Error::WrongPhaseCount { .. }
        | Error::TruncationTooSmall { .. } => PyValueError::new_err(err.to_string()),
        Error::Unstable { .. } | Error::UnstableMm1 { .. } => {
            UnstableError::new_err(err.to_string())
        }
        _ => VacqError::new_err(err.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn entries(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn tuple(s: State) -> (usize, usize) {
    (s.level, s.phase)
}

fn options(tol: f64, max_iter: usize) -> SolverOptions {
    SolverOptions { tol, max_iter }
}

#[pyclass(name = "VacationModel", module = "vacq_py", frozen)]
struct PyVacationModel {
    inner: model::VacationModel,
}

#[pymethods]
impl PyVacationModel {
    #[new]
    fn new(arrival_rate: f64, base_rate: f64, decay: Vec<f64>) -> PyResult<Self> {
        let inner = model::VacationModel::new(arrival_rate, base_rate, decay).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn four_phase(arrival_rate: f64, base_rate: f64, a: f64, b: f64) -> PyResult<Self> {
        let inner =
            model::VacationModel::four_phase(arrival_rate, base_rate, a, b).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn five_phase(arrival_rate: f64, base_rate: f64, a: f64, b: f64, c: f64) -> PyResult<Self> {
        let inner =
            model::VacationModel::five_phase(arrival_rate, base_rate, a, b, c).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn arrival_rate(&self) -> f64 {
        self.inner.arrival_rate()
    }

    #[getter]
    fn base_rate(&self) -> f64 {
        self.inner.base_rate()
    }

    #[getter]
    fn decay(&self) -> Vec<f64> {
        self.inner.decay().to_vec()
    }

    #[getter]
    fn phase_count(&self) -> usize {
        self.inner.phase_count()
    }

    #[getter]
    fn load(&self) -> f64 {
        self.inner.load()
    }

    fn service_rates(&self) -> Vec<f64> {
        self.inner.service_rates()
    }

    fn with_arrival_rate(&self, arrival_rate: f64) -> PyResult<Self> {
        let inner = self.inner.with_arrival_rate(arrival_rate).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn scaled(&self, factor: f64) -> PyResult<Self> {
        let inner = self.inner.scaled(factor).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn transient_states(&self) -> Vec<(usize, usize)> {
        model::transient_states(&self.inner)
            .into_iter()
            .map(tuple)
            .collect()
    }

    /// Every generator block, keyed by name.
    fn blocks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let b = model::build_blocks(&self.inner);
        let d = PyDict::new(py);
        for (name, m) in [
            ("a00", &b.a00),
            ("a01", &b.a01),
            ("a02", &b.a02),
            ("a10", &b.a10),
            ("a11", &b.a11),
            ("big_a0", &b.big_a0),
            ("big_a1", &b.big_a1),
            ("big_a2", &b.big_a2),
            ("b11", &b.b11),
            ("b12", &b.b12),
            ("b21", &b.b21),
        ] {
            d.set_item(name, rows(m))?;
        }
        let states: Vec<(usize, usize)> = b.boundary_states.iter().copied().map(tuple).collect();
        d.set_item("boundary_states", states)?;
        d.set_item("repeating_state_offsets", b.repeating_state_offsets.clone())?;
        Ok(d)
    }

    /// Drift profile at `arrival_rate` (default: the model's own).
    #[pyo3(signature = (arrival_rate = None))]
    fn stability<'py>(
        &self,
        py: Python<'py>,
        arrival_rate: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let lambda = arrival_rate.unwrap_or(self.inner.arrival_rate());
        let p = stability::stability_profile(&self.inner, lambda);
        let d = PyDict::new(py);
        d.set_item("arrival_rate", p.arrival_rate)?;
        d.set_item("total_rates", p.total_rates)?;
        d.set_item("sojourn_weights", p.sojourn_weights)?;
        d.set_item("mean_service_rate", p.mean_service_rate)?;
        d.set_item("stable", p.stable)?;
        Ok(d)
    }

    fn is_stable(&self) -> bool {
        stability::is_stable(&self.inner)
    }

    #[pyo3(signature = (tol = 1e-14, max_iter = 100_000))]
    fn solve(&self, py: Python<'_>, tol: f64, max_iter: usize) -> PyResult<PyStationarySolution> {
        let model = self.inner.clone();
        let inner = py
            .detach(move || qbd::solve_model(&model, &options(tol, max_iter)))
            .map_err(to_py)?;
        Ok(PyStationarySolution { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "VacationModel(arrival_rate={}, base_rate={}, decay={:?})",
            self.inner.arrival_rate(),
            self.inner.base_rate(),
            self.inner.decay()
        )
    }
}

#[pyclass(name = "StationarySolution", module = "vacq_py", frozen)]
struct PyStationarySolution {
    inner: qbd::StationarySolution,
}

#[pymethods]
impl PyStationarySolution {
    #[getter]
    fn pi0(&self) -> Vec<f64> {
        entries(&self.inner.pi0)
    }

    #[getter]
    fn pi1(&self) -> Vec<f64> {
        entries(&self.inner.pi1)
    }

    #[getter]
    fn rate_matrix(&self) -> Vec<Vec<f64>> {
        rows(self.inner.r())
    }

    #[getter]
    fn spectral_radius(&self) -> f64 {
        self.inner.rate_matrix.spectral_radius
    }

    #[getter]
    fn rate_residual(&self) -> f64 {
        self.inner.rate_matrix.residual
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.rate_matrix.iterations
    }

    fn normalization_error(&self) -> f64 {
        self.inner.normalization_error()
    }

    fn expected_customers_paper(&self) -> f64 {
        self.inner.expected_customers_paper()
    }

    fn expected_customers_exact(&self) -> f64 {
        self.inner.expected_customers_exact()
    }

    fn probability(&self, level: usize, phase: usize) -> f64 {
        self.inner.probability(State::new(level, phase))
    }

    fn level_distribution(&self, max_level: usize) -> Vec<f64> {
        self.inner.level_distribution(max_level)
    }
}

#[pyfunction]
fn truncated_direct_solve<'py>(
    py: Python<'py>,
    model: &PyVacationModel,
    max_level: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let m = model.inner.clone();
    let res = py
        .detach(move || oracles::truncated_direct_solve(&m, max_level))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("expected_customers", res.expected_customers)?;
    d.set_item("tail_mass", res.tail_mass)?;
    d.set_item("reliable", res.reliable())?;
    d.set_item("level_distribution", res.level_distribution())?;
    let labels: Vec<(usize, usize)> = res.labels.iter().copied().map(tuple).collect();
    d.set_item("labels", labels)?;
    d.set_item("probabilities", res.probabilities)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (model, horizon, warmup, seed = 42, replications = 20))]
fn simulate<'py>(
    py: Python<'py>,
    model: &PyVacationModel,
    horizon: f64,
    warmup: f64,
    seed: u64,
    replications: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let m = model.inner.clone();
    let config = SimulationConfig {
        horizon,
        warmup,
        seed,
        replications,
    };
    let est = py
        .detach(move || oracles::simulate(&m, &config))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mean_customers", est.mean_customers)?;
    d.set_item("std_error", est.std_error)?;
    d.set_item("replication_means", est.replication_means)?;
    d.set_item("events", est.events)?;
    d.set_item("drift_warning", est.drift_warning)?;
    Ok(d)
}

#[pyfunction]
fn mm1_expected_customers(arrival_rate: f64, service_rate: f64) -> PyResult<f64> {
    analysis::mm1_expected_customers(arrival_rate, service_rate).map_err(to_py)
}

/// Largest stable `lambda / mu` for the decay vector, if any.
#[pyfunction]
fn critical_load(decay: Vec<f64>) -> Option<f64> {
    stability::critical_load(&decay)
}

#[pyfunction]
fn stability_polynomial_5ph(model: &PyVacationModel, arrival_rate: f64) -> PyResult<f64> {
    stability::stability_polynomial_5ph(&model.inner, arrival_rate).map_err(to_py)
}

#[pyfunction]
fn theorem2_report<'py>(py: Python<'py>, a: f64, b: f64, mu: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = stability::theorem2_report(a, b, mu).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("f_coefficients", r.f_coefficients.to_vec())?;
    d.set_item("discriminant_a", r.discriminant_a)?;
    d.set_item("case", format!("{:?}", r.case))?;
    d.set_item("all_roots_negative", r.all_roots_negative())?;
    d.set_item("roots", r.roots)?;
    Ok(d)
}

#[pyfunction]
fn cubic_f(a: f64, b: f64, mu: f64, arrival_rate: f64) -> f64 {
    stability::cubic_f(a, b, mu, arrival_rate)
}

#[pyfunction]
#[pyo3(signature = (a = 0.99, b = 0.98, c = 0.1, mu = 100.0, grid_step = 1e-4))]
fn find_crossover_k1<'py>(
    py: Python<'py>,
    a: f64,
    b: f64,
    c: f64,
    mu: f64,
    grid_step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = FivePhase::new(a, b, c).map_err(to_py)?;
    let res = py
        .detach(move || {
            analysis::find_crossover_k1(params, mu, grid_step, &SolverOptions::default())
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("k1", res.k1)?;
    d.set_item("k2", res.k2)?;
    d.set_item("k1_refined", res.k1_refined)?;
    d.set_item("sign_changes", res.sign_changes)?;
    d.set_item("bracket", (res.bracket.lower, res.bracket.upper))?;
    d.set_item("k1_exact", res.k1_exact)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (rhos, a = 0.99, b = 0.98, c = 0.1, mu = 100.0))]
fn sweep_rho<'py>(
    py: Python<'py>,
    rhos: Vec<f64>,
    a: f64,
    b: f64,
    c: f64,
    mu: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let params = FivePhase::new(a, b, c).map_err(to_py)?;
    let records = py
        .detach(move || analysis::sweep_rho(params, mu, &rhos, &SolverOptions::default()))
        .map_err(to_py)?;
    records
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("rho", r.rho)?;
            d.set_item("el_vacation", r.el_vacation)?;
            d.set_item("el_mm1", r.el_mm1)?;
            d.set_item("status_vacation", r.status_vacation.as_str())?;
            d.set_item("status_mm1", r.status_mm1.as_str())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn vacq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VacqError", m.py().get_type::<VacqError>())?;
    m.add("UnstableError", m.py().get_type::<UnstableError>())?;
    m.add_class::<PyVacationModel>()?;
    m.add_class::<PyStationarySolution>()?;
    m.add_function(wrap_pyfunction!(truncated_direct_solve, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(mm1_expected_customers, m)?)?;
    m.add_function(wrap_pyfunction!(critical_load, m)?)?;
    m.add_function(wrap_pyfunction!(stability_polynomial_5ph, m)?)?;
    m.add_function(wrap_pyfunction!(theorem2_report, m)?)?;
    m.add_function(wrap_pyfunction!(cubic_f, m)?)?;
    m.add_function(wrap_pyfunction!(find_crossover_k1, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_rho, m)?)?;
    Ok(())
}
