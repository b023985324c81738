//! Python bindings: potentials, grid fields, configurations, single runs and
//! the verification studies.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hyperch::config::{self, POTENTIAL_KINDS};
use hyperch::experiments::{self, StudyReport};
use hyperch::grid::{self, Grid};
use hyperch::potentials::{SplitPotential, YosidaParams};
use hyperch::stepper::{self, StepDiagnostics, Trajectory};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn kind_name(kind: &str) -> PyResult<&'static str> {
    POTENTIAL_KINDS
        .iter()
        .copied()
        .find(|k| *k == kind)
        .ok_or_else(|| value_err(format!("unknown potential kind '{kind}', expected one of {POTENTIAL_KINDS:?}")))
}

/// Split double-well potential with its Yosida machinery.
#[pyclass(name = "Potential", frozen)]
struct PyPotential {
    inner: SplitPotential,
}

#[pymethods]
impl PyPotential {
    /// `kind` is regular, logarithmic or obstacle; `k` is k1 or k2.
    #[new]
    #[pyo3(signature = (kind, k = None))]
    fn new(kind: &str, k: Option<f64>) -> PyResult<Self> {
        let inner = match kind_name(kind)? {
            "regular" => SplitPotential::regular(),
            "logarithmic" => SplitPotential::logarithmic(k.unwrap_or(2.0)).map_err(value_err)?,
            _ => SplitPotential::obstacle(k.unwrap_or(1.0)).map_err(value_err)?,
        };
        Ok(Self { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    fn f1(&self, r: f64) -> f64 {
        self.inner.f1_value(r)
    }

    fn f2(&self, r: f64) -> f64 {
        self.inner.f2_value(r)
    }

    fn f2_prime(&self, r: f64) -> f64 {
        self.inner.f2_prime(r)
    }

    fn resolvent(&self, r: f64, eps: f64) -> PyResult<f64> {
        let yp = YosidaParams::new(eps).map_err(value_err)?;
        self.inner.resolvent(&yp, r).map_err(runtime_err)
    }

    fn yosida_prime(&self, r: f64, eps: f64) -> PyResult<f64> {
        let yp = YosidaParams::new(eps).map_err(value_err)?;
        self.inner.yosida_prime(&yp, r).map_err(runtime_err)
    }

    fn moreau_value(&self, r: f64, eps: f64) -> PyResult<f64> {
        let yp = YosidaParams::new(eps).map_err(value_err)?;
        self.inner.moreau_value(&yp, r).map_err(runtime_err)
    }

    fn minimal_section(&self, r: f64) -> PyResult<f64> {
        self.inner.minimal_section(r).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Potential({:?})", self.inner.kind())
    }
}

/// Cell-centred field on a uniform grid with Neumann boundaries.
#[pyclass(name = "Field", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: grid::Field,
}

#[pymethods]
impl PyField {
    /// `n` and `length` have one entry per axis (1 or 2); `values` is
    /// row-major with x fastest.
    #[new]
    fn new(n: Vec<usize>, length: Vec<f64>, values: Vec<f64>) -> PyResult<Self> {
        let g = Arc::new(Grid::new(&n, &length).map_err(value_err)?);
        let inner = grid::Field::from_values(&g, values).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_csv(n: Vec<usize>, length: Vec<f64>, text: &str) -> PyResult<Self> {
        let g = Arc::new(Grid::new(&n, &length).map_err(value_err)?);
        let inner = grid::Field::from_csv(&g, text).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.grid().n().to_vec()
    }

    #[getter]
    fn centers(&self) -> Vec<Vec<f64>> {
        let g = self.inner.grid();
        (0..g.len()).map(|i| g.center(i)[..g.dim()].to_vec()).collect()
    }

    fn laplacian(&self) -> Self {
        Self {
            inner: self.inner.laplacian(),
        }
    }

    fn inner_product(&self, other: &PyField) -> PyResult<f64> {
        self.inner.inner_product(&other.inner).map_err(value_err)
    }

    fn h_norm(&self) -> f64 {
        self.inner.h_norm()
    }

    fn v_norm(&self) -> f64 {
        self.inner.v_norm()
    }

    fn integrate(&self) -> f64 {
        self.inner.integrate()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.values().len()
    }
}

/// Run or study configuration in the key = value format of the CLI.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: config::Config,
}

#[pymethods]
impl PyConfig {
    /// Defaults for everything except grid size, horizon, step and kind.
    #[new]
    fn new(n: usize, t_final: f64, dt: f64, kind: &str) -> PyResult<Self> {
        Ok(Self {
            inner: config::Config::with_required(n, t_final, dt, kind_name(kind)?),
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        config::parse_config(text)
            .map(|inner| Self { inner })
            .map_err(|errs| value_err(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.params.alpha
    }

    #[setter]
    fn set_alpha(&mut self, v: f64) {
        self.inner.params.alpha = v;
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[setter]
    fn set_epsilon(&mut self, v: f64) {
        self.inner.epsilon = v;
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.t_final
    }

    #[getter]
    fn potential_kind(&self) -> &'static str {
        self.inner.potential_kind
    }

    fn __repr__(&self) -> String {
        format!("Config({})", self.inner.digest())
    }
}

/// Result of one integration.
#[pyclass(name = "Run", frozen)]
struct PyRun {
    traj: Trajectory,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn steps(&self) -> usize {
        self.traj.steps()
    }

    /// Times of the recorded snapshots.
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.traj.times()
    }

    /// Per-level scalars, `t = 0` first.
    #[getter]
    fn diagnostics(&self) -> Vec<(usize, f64, f64, f64, f64, usize, f64, f64, f64)> {
        let row = |d: &StepDiagnostics| {
            (
                d.step,
                d.t,
                d.mass_phi,
                d.mass_sigma,
                d.alpha_mass_v,
                d.newton_iterations,
                d.phi_min,
                d.phi_max,
                d.xi_sup,
            )
        };
        std::iter::once(&self.traj.initial).chain(&self.traj.diagnostics).map(row).collect()
    }

    /// Final value of `mu`, `v`, `phi`, `sigma` or `xi`.
    fn final_field(&self, name: &str) -> PyResult<PyField> {
        let s = self.traj.final_state();
        let f = match name {
            "mu" => &s.mu,
            "v" => &s.v,
            "phi" => &s.phi,
            "sigma" => &s.sigma,
            "xi" => &s.xi,
            _ => return Err(value_err(format!("unknown field '{name}'"))),
        };
        Ok(PyField { inner: f.clone() })
    }
}

#[pyfunction]
fn run(cfg: &PyConfig) -> PyResult<PyRun> {
    let c = &cfg.inner;
    let potential = c.potential().map_err(value_err)?;
    let init = c.initial_data().map_err(value_err)?;
    let traj = stepper::run(&c.params, &potential, &c.controls, &init, c.t_final, &c.scheme()).map_err(runtime_err)?;
    Ok(PyRun { traj })
}

/// Outcome of a study: the data table and its verdicts.
#[pyclass(name = "Report", frozen)]
struct PyReport {
    inner: StudyReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn study(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn digest(&self) -> String {
        self.inner.digest.clone()
    }

    #[getter]
    fn columns(&self) -> Vec<&'static str> {
        self.inner.columns().to_vec()
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows.clone()
    }

    #[getter]
    fn slope(&self) -> Option<f64> {
        self.inner.fit.as_ref().map(|f| f.slope)
    }

    /// `(name, value, bound, passed)`; `passed` is None when not applicable.
    #[getter]
    fn verdicts(&self) -> Vec<(String, f64, String, Option<bool>)> {
        self.inner
            .verdicts
            .iter()
            .map(|v| (v.name.clone(), v.value, v.bound.to_string(), v.passed()))
            .collect()
    }

    #[getter]
    fn passed(&self) -> bool {
        self.inner.passed()
    }

    fn summary(&self) -> String {
        self.inner.summary()
    }

    /// Writes the CSV files the CLI writes; returns their paths.
    fn write(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        hyperch::cli::write_report(&self.inner, &dir).map_err(|e| PyIOError::new_err(e.to_string()))
    }
}

fn study(r: Result<StudyReport, experiments::ExperimentError>) -> PyResult<PyReport> {
    r.map(|inner| PyReport { inner }).map_err(runtime_err)
}

#[pyfunction]
#[pyo3(signature = (cfg, jobs = 1))]
fn sweep_alpha(py: Python<'_>, cfg: &PyConfig, jobs: usize) -> PyResult<PyReport> {
    study(py.detach(|| experiments::sweep_alpha(&cfg.inner, jobs)))
}

#[pyfunction]
#[pyo3(signature = (cfg, jobs = 1))]
fn sweep_eps(py: Python<'_>, cfg: &PyConfig, jobs: usize) -> PyResult<PyReport> {
    study(py.detach(|| experiments::sweep_eps(&cfg.inner, jobs)))
}

#[pyfunction]
#[pyo3(signature = (cfg, jobs = 1))]
fn contdep(py: Python<'_>, cfg: &PyConfig, jobs: usize) -> PyResult<PyReport> {
    study(py.detach(|| experiments::contdep(&cfg.inner, jobs)))
}

#[pyfunction]
#[pyo3(signature = (cfg, jobs = 1))]
fn separation(py: Python<'_>, cfg: &PyConfig, jobs: usize) -> PyResult<PyReport> {
    study(py.detach(|| experiments::separation(&cfg.inner, jobs)))
}

#[pyfunction]
#[pyo3(signature = (cfg, seed = 0, jobs = 1))]
fn check(py: Python<'_>, cfg: &PyConfig, seed: u64, jobs: usize) -> PyReport {
    PyReport {
        inner: py.detach(|| experiments::invariant_suite(&cfg.inner, seed, jobs)),
    }
}

#[pymodule]
fn hyperch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRun>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_eps, m)?)?;
    m.add_function(wrap_pyfunction!(contdep, m)?)?;
    m.add_function(wrap_pyfunction!(separation, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
