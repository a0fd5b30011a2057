//! Python bindings: configuration, the model on its grid, the three solvers
//! and the scenario runner. Fields cross the boundary as flat lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pdmp_mfc::dual::{evaluate_dual, CouplingCost, GradientOracle};
use pdmp_mfc::hjb::{self, SolverSettings};
use pdmp_mfc::scenario::{self, RunOptions, ScenarioName};
use pdmp_mfc::simulator::simulate_summary;
use pdmp_mfc::{DualPath, Error, FieldKind, ScenarioConfig, ValueField};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Config")]
struct PyConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyConfig {
    /// Reads a TOML configuration or the JSON manifest of an earlier run.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ScenarioConfig::load(&path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ScenarioConfig::from_json_str(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Failed stability and consistency checks, empty when the config is usable.
    fn validate(&self) -> Vec<String> {
        pdmp_mfc::validate_config(&self.inner).iter().map(|v| v.to_string()).collect()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.algo.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.algo.seed = seed;
    }

    #[getter]
    fn trajectories(&self) -> usize {
        self.inner.algo.trajectories
    }

    #[setter]
    fn set_trajectories(&mut self, m: usize) {
        self.inner.algo.trajectories = m;
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.algo.iterations
    }

    #[setter]
    fn set_iterations(&mut self, k: usize) {
        self.inner.algo.iterations = k;
    }

    /// Copy on a new grid with the same spans.
    fn with_steps(&self, dt: f64, dtheta: f64) -> PyResult<Self> {
        Ok(PyConfig {
            inner: self.inner.with_steps(dt, dtheta).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        let g = &self.inner.grid;
        format!(
            "Config(horizon={} h, dt={} h, dtheta={}, M={}, K={}, seed={})",
            g.horizon, g.dt, g.dtheta, self.inner.algo.trajectories, self.inner.algo.iterations, self.inner.algo.seed
        )
    }
}

/// A real field on (time step, plane, temperature node), stored flat.
#[pyclass(name = "Field")]
struct PyField {
    inner: ValueField,
}

#[pymethods]
impl PyField {
    /// `(time steps, planes, nodes)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.n_times(), self.inner.planes(), self.inner.n_nodes())
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind() {
            FieldKind::Value => "value",
            FieldKind::ControlRate => "control",
            FieldKind::Density => "density",
        }
    }

    fn get(&self, n: usize, plane: usize, k: usize) -> PyResult<f64> {
        let (t, p, nodes) = self.shape();
        if n >= t || plane >= p || k >= nodes {
            return Err(PyValueError::new_err(format!("index ({n}, {plane}, {k}) outside {:?}", (t, p, nodes))));
        }
        Ok(self.inner.get(n, plane, k))
    }

    /// Row-major values, time slowest.
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    fn __repr__(&self) -> String {
        format!("Field(kind={}, shape={:?})", self.kind(), self.shape())
    }
}

/// The model laid out on the configured grid.
#[pyclass(name = "Problem")]
struct PyProblem {
    inner: pdmp_mfc::Problem,
}

#[pymethods]
impl PyProblem {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        Ok(PyProblem {
            inner: pdmp_mfc::Problem::from_config(&config.inner).map_err(to_py)?,
        })
    }

    /// Same model with the configured tariff as running cost.
    #[staticmethod]
    #[pyo3(signature = (config, shift=0.0))]
    fn priced(config: &PyConfig, shift: f64) -> PyResult<Self> {
        let cfg = scenario::priced_config(&config.inner, shift).map_err(to_py)?;
        Ok(PyProblem {
            inner: pdmp_mfc::Problem::from_config(&cfg).map_err(to_py)?,
        })
    }

    fn times(&self) -> Vec<f64> {
        self.inner.grid.times()
    }

    fn thetas(&self) -> Vec<f64> {
        self.inner.grid.thetas()
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.modes()
    }

    /// Value function for the price path `lam` (one value per time node).
    fn solve_phi(&self, lam: Vec<f64>) -> PyResult<PyField> {
        let path = DualPath::new(&self.inner.grid, lam).map_err(to_py)?;
        let phi = hjb::solve_phi(&self.inner, &path, &SolverSettings::default()).map_err(to_py)?;
        Ok(PyField { inner: phi })
    }

    fn extract_control(&self, phi: &PyField) -> PyField {
        PyField {
            inner: hjb::extract_control(&self.inner, &phi.inner),
        }
    }

    #[pyo3(signature = (control=None))]
    fn forward_density(&self, control: Option<&PyField>) -> PyResult<PyField> {
        let m = hjb::forward_density(&self.inner, control.map(|c| &c.inner)).map_err(to_py)?;
        Ok(PyField { inner: m })
    }

    fn expected_consumption(&self, density: &PyField) -> Vec<f64> {
        hjb::expected_consumption(&self.inner, &density.inner)
    }

    /// Monte Carlo statistics of `m` agents under `control` (nominal if None).
    #[pyo3(signature = (m, seed, control=None))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        m: usize,
        seed: u64,
        control: Option<&PyField>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let s = simulate_summary(&self.inner, control.map(|c| &c.inner), m, seed).map_err(to_py)?;
        let d = self.inner.modes();
        let out = PyDict::new(py);
        out.set_item("aggregate", s.aggregate(d))?;
        out.set_item("std_error", s.aggregate_std_error(d))?;
        out.set_item("mean_cost", s.mean_cost())?;
        out.set_item("jumps", s.jumps)?;
        out.set_item("band_fraction", s.band_fraction())?;
        out.set_item("mean_first_jump_h", s.mean_first_jump())?;
        Ok(out)
    }

    /// Dual value and gradient at `lam` for quadratic tracking of `reference`,
    /// using the density oracle.
    fn dual<'py>(
        &self,
        py: Python<'py>,
        kappa: f64,
        reference: Vec<f64>,
        lam: Vec<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let g = &self.inner.grid;
        let coupling = CouplingCost::tracking(g, kappa, reference).map_err(to_py)?;
        let path = DualPath::new(g, lam).map_err(to_py)?;
        let e = evaluate_dual(&self.inner, &coupling, &path, GradientOracle::Density, &SolverSettings::default())
            .map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("dual_value", e.dual_value)?;
        out.set_item("gradient", e.gradient)?;
        out.set_item("consumption", e.consumption)?;
        out.set_item("individual_cost", e.individual_cost)?;
        Ok(out)
    }
}

/// Runs a named scenario, writes its artifacts under `out_dir` and returns
/// its metrics.
#[pyfunction]
#[pyo3(signature = (name, config, out_dir, emit_fields=false))]
fn run_scenario(
    py: Python<'_>,
    name: &str,
    config: &PyConfig,
    out_dir: PathBuf,
    emit_fields: bool,
) -> PyResult<std::collections::BTreeMap<String, f64>> {
    let name: ScenarioName = name.parse().map_err(to_py)?;
    let mut opts = RunOptions::new(out_dir);
    opts.emit_fields = emit_fields;
    let cfg = config.inner.clone();
    let report = py.detach(move || scenario::run_scenario(name, &cfg, &opts)).map_err(to_py)?;
    Ok(report.metrics)
}

#[pyfunction]
#[pyo3(signature = (x, weight=1.0))]
fn h_value(x: f64, weight: f64) -> f64 {
    pdmp_mfc::h_value(x, &pdmp_mfc::JumpCost::Quadratic { weight })
}

#[pyfunction]
#[pyo3(signature = (x, weight=1.0))]
fn h_prime(x: f64, weight: f64) -> f64 {
    pdmp_mfc::h_prime(x, &pdmp_mfc::JumpCost::Quadratic { weight })
}

#[pymodule(name = "pdmp_mfc")]
pub fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(h_value, m)?)?;
    m.add_function(wrap_pyfunction!(h_prime, m)?)?;
    Ok(())
}
