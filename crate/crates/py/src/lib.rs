//! Python bindings for the robust NOMA beamforming library.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use robust_noma::campaign::{self, CampaignConfig, Scheme};
use robust_noma::model::{self, BeamformerSet, ChannelSet, ComplexVec, ErrorSet, HermitianMat, QosTargets};
use robust_noma::robust::{self, SolverConfig};
use robust_noma::sdp::SdpOptions;
use robust_noma::worst_case::{self, InnerQuadratic};
use robust_noma::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Solver { .. } | Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn vecs(rows: Vec<Vec<Complex64>>) -> PyResult<Vec<ComplexVec>> {
    rows.into_iter().map(|r| ComplexVec::new(r).map_err(py_err)).collect()
}

fn rows(v: &[ComplexVec]) -> Vec<Vec<Complex64>> {
    v.iter().map(|x| x.entries().to_vec()).collect()
}

fn targets(gamma_db: Vec<f64>, users: usize) -> PyResult<QosTargets> {
    match gamma_db.as_slice() {
        [g] => QosTargets::uniform_db(*g, users),
        _ => QosTargets::from_db(gamma_db),
    }
    .map_err(py_err)
}

fn solver_config(i_max: usize, tol: f64, seed: u64) -> PyResult<SolverConfig> {
    let cfg = SolverConfig {
        i_max,
        delta_tol: tol,
        seed,
        ..SolverConfig::default()
    };
    cfg.validate().map_err(py_err)?;
    Ok(cfg)
}

/// Result of the robust alternating design.
#[pyclass(name = "RobustSolution", get_all)]
struct PyRobustSolution {
    beams: Vec<Vec<Complex64>>,
    errors: Vec<Vec<Complex64>>,
    total_power: f64,
    iterations: usize,
    converged: bool,
    per_iteration_delta: Vec<f64>,
    rank_one_all: bool,
    used_randomization: bool,
}

#[pymethods]
impl PyRobustSolution {
    fn __repr__(&self) -> String {
        format!(
            "RobustSolution(total_power={:.6e}, iterations={}, converged={})",
            self.total_power, self.iterations, self.converged
        )
    }
}

/// Result of a single power-minimisation relaxation.
#[pyclass(name = "PowerMinResult", get_all)]
struct PyPowerMinResult {
    beams: Vec<Vec<Complex64>>,
    total_power: f64,
    rank_one: bool,
    used_randomization: bool,
}

#[pymethods]
impl PyPowerMinResult {
    fn __repr__(&self) -> String {
        format!(
            "PowerMinResult(total_power={:.6e}, rank_one={})",
            self.total_power, self.rank_one
        )
    }
}

/// Robust beam design. Channels must be sorted by ascending norm.
/// A single `gamma_db` entry applies to every user.
#[pyfunction]
#[pyo3(signature = (channels, gamma_db, epsilon, sigma2, i_max=10, tol=1e-4, seed=0))]
fn solve_robust(
    channels: Vec<Vec<Complex64>>,
    gamma_db: Vec<f64>,
    epsilon: f64,
    sigma2: f64,
    i_max: usize,
    tol: f64,
    seed: u64,
) -> PyResult<PyRobustSolution> {
    let ch = ChannelSet::new(vecs(channels)?, epsilon, sigma2).map_err(py_err)?;
    let t = targets(gamma_db, ch.users())?;
    let r = robust::run(&ch, &t, &solver_config(i_max, tol, seed)?).map_err(py_err)?;
    Ok(PyRobustSolution {
        beams: rows(r.beams.beams()),
        errors: rows(r.errors.errors()),
        total_power: r.total_power,
        iterations: r.iterations,
        converged: r.converged,
        per_iteration_delta: r.per_iteration_delta,
        rank_one_all: r.rank_one_all,
        used_randomization: r.used_randomization,
    })
}

/// Power minimisation treating the estimates as exact.
#[pyfunction]
#[pyo3(signature = (channels, gamma_db, sigma2, seed=0))]
fn solve_nonrobust(
    channels: Vec<Vec<Complex64>>,
    gamma_db: Vec<f64>,
    sigma2: f64,
    seed: u64,
) -> PyResult<PyPowerMinResult> {
    let ch = ChannelSet::new(vecs(channels)?, 0.0, sigma2).map_err(py_err)?;
    let t = targets(gamma_db, ch.users())?;
    let r = robust::solve_nonrobust(&ch, &t, &solver_config(10, 1e-4, seed)?).map_err(py_err)?;
    Ok(PyPowerMinResult {
        beams: rows(r.beams.beams()),
        total_power: r.beams.total_power(),
        rank_one: r.rank_one_all(),
        used_randomization: r.used_randomization,
    })
}

/// Effective SINR of every user, linear, under channels `ĥ + e`.
#[pyfunction]
fn effective_sinrs(
    channels: Vec<Vec<Complex64>>,
    errors: Vec<Vec<Complex64>>,
    beams: Vec<Vec<Complex64>>,
    sigma2: f64,
) -> PyResult<Vec<f64>> {
    let errors = vecs(errors)?;
    let eps = errors.iter().map(ComplexVec::norm).fold(0.0, f64::max);
    let ch = ChannelSet::new(vecs(channels)?, eps, sigma2).map_err(py_err)?;
    let es = ErrorSet::new(errors, eps).map_err(py_err)?;
    let bs = BeamformerSet::new(vecs(beams)?).map_err(py_err)?;
    model::effective_sinrs(&ch, &es, &bs).map_err(py_err)
}

/// Minimiser of `-eᴴAe + 2Re(eᴴb) + c` over `‖e‖ <= epsilon`, returned as
/// `(error, value)`. `A` must be positive semidefinite.
#[pyfunction]
fn worst_case_error(
    a: Vec<Vec<Complex64>>,
    b: Vec<Complex64>,
    c: f64,
    epsilon: f64,
) -> PyResult<(Vec<Complex64>, f64)> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("A must be square"));
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let q = InnerQuadratic::new(
        HermitianMat::new(m).map_err(py_err)?,
        ComplexVec::new(b).map_err(py_err)?,
        c,
    )
    .map_err(py_err)?;
    let d = worst_case::solve_dual(&q, epsilon, &SdpOptions::default()).map_err(py_err)?;
    let e = worst_case::recover_error(&q, epsilon, d.lambda).map_err(py_err)?;
    let v = q.objective(&e);
    Ok((e.entries().to_vec(), v))
}

/// Monte Carlo campaign settings; field names match the TOML keys.
#[pyclass(name = "CampaignConfig")]
struct PyCampaignConfig {
    inner: CampaignConfig,
}

#[pymethods]
impl PyCampaignConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => CampaignConfig::from_toml_str(t).map_err(py_err)?,
            None => CampaignConfig::default(),
        };
        Ok(PyCampaignConfig { inner })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(py_err)
    }

    #[getter]
    fn n_t(&self) -> usize {
        self.inner.n_t
    }
    #[setter]
    fn set_n_t(&mut self, v: usize) {
        self.inner.n_t = v;
    }
    #[getter]
    fn users(&self) -> usize {
        self.inner.users
    }
    #[setter]
    fn set_users(&mut self, v: usize) {
        self.inner.users = v;
    }
    #[getter]
    fn gamma_db_list(&self) -> Vec<f64> {
        self.inner.gamma_db_list.clone()
    }
    #[setter]
    fn set_gamma_db_list(&mut self, v: Vec<f64>) {
        self.inner.gamma_db_list = v;
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
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }
    #[setter]
    fn set_sigma2(&mut self, v: f64) {
        self.inner.sigma2 = v;
    }
    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.n_channels
    }
    #[setter]
    fn set_n_channels(&mut self, v: usize) {
        self.inner.n_channels = v;
    }
    #[getter]
    fn n_errors_per_channel(&self) -> usize {
        self.inner.n_errors_per_channel
    }
    #[setter]
    fn set_n_errors_per_channel(&mut self, v: usize) {
        self.inner.n_errors_per_channel = v;
    }
    #[getter]
    fn master_seed(&self) -> u64 {
        self.inner.master_seed
    }
    #[setter]
    fn set_master_seed(&mut self, v: u64) {
        self.inner.master_seed = v;
    }
    #[getter]
    fn schemes(&self) -> Vec<String> {
        self.inner.schemes.iter().map(|s| s.name().to_string()).collect()
    }
    #[setter]
    fn set_schemes(&mut self, v: Vec<String>) -> PyResult<()> {
        self.inner.schemes = v
            .iter()
            .map(|s| s.parse::<Scheme>().map_err(py_err))
            .collect::<PyResult<_>>()?;
        Ok(())
    }
}

/// Aggregated statistics of one campaign.
#[pyclass(name = "CampaignResult")]
struct PyCampaignResult {
    inner: campaign::CampaignResult,
}

impl PyCampaignResult {
    fn entry(&self, scheme: &str, gamma_db: f64) -> PyResult<&campaign::SchemeResult> {
        let s: Scheme = scheme.parse().map_err(py_err)?;
        self.inner
            .get(s, gamma_db)
            .ok_or_else(|| PyValueError::new_err(format!("no result for {scheme} at {gamma_db} dB")))
    }
}

#[pymethods]
impl PyCampaignResult {
    fn outage_probability(&self, scheme: &str, gamma_db: f64) -> PyResult<f64> {
        Ok(self.entry(scheme, gamma_db)?.outage_probability)
    }

    fn mean_power_mw(&self, scheme: &str, gamma_db: f64) -> PyResult<Option<f64>> {
        Ok(self.entry(scheme, gamma_db)?.mean_power_mw)
    }

    fn feasibility_ratio(&self, scheme: &str, gamma_db: f64) -> PyResult<Option<f64>> {
        Ok(self.entry(scheme, gamma_db)?.feasibility_ratio)
    }

    /// Robust iteration counts pooled over every target.
    fn iteration_histogram(&self) -> Vec<usize> {
        self.inner.pooled_histogram()
    }

    /// Writes the result tables and returns the written paths.
    fn export(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        campaign::export_results(&self.inner, &dir).map_err(py_err)
    }
}

#[pyfunction]
fn run_campaign(config: &PyCampaignConfig) -> PyResult<PyCampaignResult> {
    config.inner.validate().map_err(py_err)?;
    let inner = campaign::run_campaign(&config.inner).map_err(py_err)?;
    Ok(PyCampaignResult { inner })
}

/// Built-in oracle checks as `(name, passed, worst)` tuples.
#[pyfunction]
fn selftest() -> Vec<(String, bool, f64)> {
    robust_noma::selftest::run_all()
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.worst))
        .collect()
}

#[pymodule]
fn robust_noma_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRobustSolution>()?;
    m.add_class::<PyPowerMinResult>()?;
    m.add_class::<PyCampaignConfig>()?;
    m.add_class::<PyCampaignResult>()?;
    m.add_function(wrap_pyfunction!(solve_robust, m)?)?;
    m.add_function(wrap_pyfunction!(solve_nonrobust, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sinrs, m)?)?;
    m.add_function(wrap_pyfunction!(worst_case_error, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
