//! Python bindings: networks, spectral decompositions, covariance reports,
//! simulation, confidence intervals, topology tests, the exact oracles, and
//! the verification checks, mirroring the native library surface.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use rsp_core::asymptotics;
use rsp_core::dynamics;
use rsp_core::harness;
use rsp_core::inference;
use rsp_core::network;
use rsp_core::spectral;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_rows(m: &rsp_core::nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Weighted directed network with column-stochastic weight matrix.
#[pyclass(name = "Network", module = "rsp_py")]
#[derive(Clone)]
struct PyNetwork {
    inner: network::WeightedNetwork,
}

#[pymethods]
impl PyNetwork {
    /// Build from a row-major weight matrix (columns must sum to one).
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: network::build_network_rows(&rows).map_err(err)?,
        })
    }

    /// Fully connected: W = (1 - alpha) I + (alpha / N) 1 1^T.
    #[staticmethod]
    fn mean_field(n: usize, alpha: f64) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: network::mean_field(n, alpha).map_err(err)?,
        })
    }

    /// Directed cycle: each vertex split between itself and its successor.
    #[staticmethod]
    fn cycle(n: usize) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: network::cycle(n).map_err(err)?,
        })
    }

    /// One influential vertex feeding all others with weight p.
    #[staticmethod]
    fn special_vertex(n: usize, p: f64) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: network::special_vertex(n, p).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(PyNetwork {
            inner: network::WeightedNetwork::from_json(s).map_err(err)?,
        })
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    fn weights(&self) -> Vec<Vec<f64>> {
        matrix_rows(self.inner.weights())
    }

    fn is_irreducible(&self) -> bool {
        self.inner.is_irreducible()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(n={}, irreducible={})",
            self.inner.n_vertices(),
            self.inner.is_irreducible()
        )
    }
}

/// Ordered eigenvalues and bi-orthogonal eigenvector blocks of W^T.
#[pyclass(name = "Spectrum", module = "rsp_py")]
#[derive(Clone)]
struct PySpectrum {
    inner: spectral::SpectralData,
}

#[pymethods]
impl PySpectrum {
    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(PySpectrum {
            inner: spectral::SpectralData::from_json(s).map_err(err)?,
        })
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    /// Eigenvalues, leading 1 first, the rest by descending real part.
    fn eigenvalues(&self) -> Vec<Complex64> {
        self.inner.eigenvalues().to_vec()
    }

    /// Second-largest real part, None for a single vertex.
    #[getter]
    fn lambda_star(&self) -> Option<Complex64> {
        self.inner.lambda_star()
    }

    /// Perron right eigenvector, paired to u1 = 1/sqrt(N).
    fn v1(&self) -> Vec<f64> {
        self.inner.v1().iter().copied().collect()
    }

    #[getter]
    fn v1_norm_sq(&self) -> f64 {
        self.inner.v1_norm_sq()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrum(n={}, lambda_star={:?})",
            self.inner.n_vertices(),
            self.inner.lambda_star()
        )
    }
}

/// Which covariance formulas apply for the reinforcement decay.
#[pyclass(name = "Regime", module = "rsp_py")]
#[derive(Clone)]
struct PyRegime {
    inner: spectral::RegimeClassification,
}

#[pymethods]
impl PyRegime {
    #[getter]
    fn case(&self) -> &'static str {
        match self.inner.case {
            spectral::RegimeCase::A => "A",
            spectral::RegimeCase::B => "B",
            spectral::RegimeCase::C => "C",
        }
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    /// Indices of eigenvalues on the critical line (empty unless gamma = 1).
    #[getter]
    fn a_star_set(&self) -> Vec<usize> {
        self.inner.a_star_set.clone()
    }

    /// Critical multiplicity; the expected covariance rank in case C.
    #[getter]
    fn m_star(&self) -> usize {
        self.inner.m_star
    }

    fn __repr__(&self) -> String {
        format!(
            "Regime(case={}, gamma={}, c={}, m_star={})",
            self.case(),
            self.inner.gamma,
            self.inner.c,
            self.inner.m_star
        )
    }
}

/// Limit covariances: synchronized scalar and complementary matrix.
#[pyclass(name = "CovarianceReport", module = "rsp_py")]
#[derive(Clone)]
struct PyCovarianceReport {
    inner: asymptotics::CovarianceReport,
}

#[pymethods]
impl PyCovarianceReport {
    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(PyCovarianceReport {
            inner: asymptotics::CovarianceReport::from_json(s).map_err(err)?,
        })
    }

    #[getter]
    fn sigma_tilde_sq(&self) -> f64 {
        self.inner.sigma_tilde_sq
    }

    fn sigma_hat(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.inner.sigma_hat)
    }

    #[getter]
    fn sigma_hat_eigenvalues(&self) -> Vec<f64> {
        self.inner.sigma_hat_eigenvalues.clone()
    }

    #[getter]
    fn rank_hat(&self) -> usize {
        self.inner.rank_hat
    }

    #[getter]
    fn rank_expected(&self) -> usize {
        self.inner.rank_expected
    }

    fn rank_matches(&self) -> bool {
        self.inner.rank_matches()
    }

    /// Asymptotic variance of sqrt-rate (Z_j - Z_k) for each pair (j, k).
    fn pairwise(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.inner.pairwise)
    }

    /// Case-C vertices whose pair differences are degenerate at this order.
    #[getter]
    fn flat_vertices(&self) -> Vec<usize> {
        self.inner.flat_vertices.clone()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// One simulated path, recorded at the requested stride.
#[pyclass(name = "Trajectory", module = "rsp_py")]
#[derive(Clone)]
struct PyTrajectory {
    inner: dynamics::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    /// (step, state) pairs; the final step is always included.
    fn records(&self) -> Vec<(u64, Vec<f64>)> {
        self.inner.records.clone()
    }

    #[getter]
    fn final_state(&self) -> Vec<f64> {
        self.inner.final_state.z.clone()
    }

    #[getter]
    fn n_steps(&self) -> u64 {
        self.inner.final_state.n
    }

    /// max_j Z_j - min_j Z_j at the final step.
    #[getter]
    fn spread(&self) -> f64 {
        self.inner.final_state.spread()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// Confidence interval for the shared limit.
#[pyclass(name = "ConfidenceInterval", module = "rsp_py")]
#[derive(Clone)]
struct PyConfidenceInterval {
    inner: inference::ConfidenceInterval,
}

#[pymethods]
impl PyConfidenceInterval {
    #[getter]
    fn center(&self) -> f64 {
        self.inner.center
    }

    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.half_width
    }

    #[getter]
    fn lower(&self) -> f64 {
        self.inner.lower
    }

    #[getter]
    fn upper(&self) -> f64 {
        self.inner.upper
    }

    #[getter]
    fn level(&self) -> f64 {
        self.inner.level
    }

    #[getter]
    fn clamped(&self) -> bool {
        self.inner.clamped
    }

    fn __repr__(&self) -> String {
        format!(
            "ConfidenceInterval(lower={}, upper={}, level={})",
            self.inner.lower, self.inner.upper, self.inner.level
        )
    }
}

/// Chi-square test outcome for a hypothesized network.
#[pyclass(name = "TestResult", module = "rsp_py")]
#[derive(Clone)]
struct PyTestResult {
    inner: inference::TestResult,
}

#[pymethods]
impl PyTestResult {
    #[getter]
    fn statistic(&self) -> f64 {
        self.inner.statistic
    }

    #[getter]
    fn dof(&self) -> usize {
        self.inner.dof
    }

    #[getter]
    fn critical(&self) -> f64 {
        self.inner.critical
    }

    #[getter]
    fn p_value(&self) -> f64 {
        self.inner.p_value
    }

    #[getter]
    fn reject(&self) -> bool {
        self.inner.reject
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }

    fn __repr__(&self) -> String {
        format!(
            "TestResult(statistic={}, dof={}, p_value={}, reject={})",
            self.inner.statistic, self.inner.dof, self.inner.p_value, self.inner.reject
        )
    }
}

/// Exact finite-step law from exhausting every Bernoulli path.
#[pyclass(name = "ExactLaw", module = "rsp_py")]
#[derive(Clone)]
struct PyExactLaw {
    inner: dynamics::ExactDistribution,
}

#[pymethods]
impl PyExactLaw {
    /// (probability, state) atoms.
    fn atoms(&self) -> Vec<(f64, Vec<f64>)> {
        self.inner.atoms.clone()
    }

    fn total_probability(&self) -> f64 {
        self.inner.total_probability()
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean()
    }

    #[getter]
    fn n_steps(&self) -> u32 {
        self.inner.n_steps
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// Eigenstructure of the network's transposed weight matrix.
#[pyfunction]
fn decompose(net: &PyNetwork) -> PyResult<PySpectrum> {
    Ok(PySpectrum {
        inner: spectral::decompose(&net.inner).map_err(err)?,
    })
}

/// Classify the covariance regime for decay r_n ~ c / n^gamma.
#[pyfunction]
#[pyo3(signature = (spectrum, gamma, c, tol = spectral::REGIME_TOL_DEFAULT))]
fn classify_regime(spectrum: &PySpectrum, gamma: f64, c: f64, tol: f64) -> PyResult<PyRegime> {
    Ok(PyRegime {
        inner: spectral::classify_regime(&spectrum.inner, gamma, c, tol).map_err(err)?,
    })
}

/// Asymptotic variance of the synchronized component.
#[pyfunction]
fn sigma_tilde_sq(spectrum: &PySpectrum, gamma: f64, c: f64) -> PyResult<f64> {
    asymptotics::sigma_tilde_sq(&spectrum.inner, gamma, c).map_err(err)
}

/// Full covariance report: synchronized scalar, complementary matrix,
/// eigenvalues, rank, and pairwise difference variances.
#[pyfunction]
fn covariance_report(
    spectrum: &PySpectrum,
    regime: &PyRegime,
) -> PyResult<PyCovarianceReport> {
    Ok(PyCovarianceReport {
        inner: asymptotics::covariance_report(&spectrum.inner, &regime.inner).map_err(err)?,
    })
}

/// Simulate one path. Records every `record_every` steps when given,
/// otherwise at geometrically spaced steps; the final step always included.
#[pyfunction]
#[pyo3(signature = (
    net, gamma, c, z0, horizon,
    seed = 0, replication = 0, n0 = None, rho = None, q = None,
    record_every = None,
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    net: &PyNetwork,
    gamma: f64,
    c: f64,
    z0: Vec<f64>,
    horizon: u64,
    seed: u64,
    replication: u64,
    n0: Option<u64>,
    rho: Option<f64>,
    q: Option<f64>,
    record_every: Option<u64>,
) -> PyResult<PyTrajectory> {
    let sched = match n0 {
        Some(n0) => dynamics::ReinforcementSchedule::with_offset(gamma, c, n0),
        None => dynamics::ReinforcementSchedule::new(gamma, c),
    }
    .map_err(err)?;
    let stride = match record_every {
        Some(k) => dynamics::Stride::Every(k),
        None => dynamics::Stride::Geometric,
    };
    let variant = match (rho, q) {
        (Some(rho), Some(q)) => Some(dynamics::ForcingVariant::new(rho, q).map_err(err)?),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("rho and q must be given together")),
    };
    Ok(PyTrajectory {
        inner: dynamics::simulate(
            &net.inner, &sched, &z0, horizon, &stride, variant, seed, replication,
        )
        .map_err(err)?,
    })
}

/// Split a state into its synchronized component and the remainder.
#[pyfunction]
fn project(spectrum: &PySpectrum, state: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
    dynamics::project(&spectrum.inner, &state).map_err(err)
}

/// Confidence interval for the limit from one late observation.
#[pyfunction]
#[pyo3(signature = (z_tilde, step, gamma, sigma_tilde_sq, level = 0.95))]
fn confidence_interval(
    z_tilde: f64,
    step: u64,
    gamma: f64,
    sigma_tilde_sq: f64,
    level: f64,
) -> PyResult<PyConfidenceInterval> {
    Ok(PyConfidenceInterval {
        inner: inference::confidence_interval(z_tilde, step, gamma, sigma_tilde_sq, level)
            .map_err(err)?,
    })
}

/// Chi-square topology test of the hypothesized network behind `spectrum`
/// against a state observed at `step`.
#[pyfunction]
#[pyo3(signature = (spectrum, regime, state, step, theta = 0.05))]
fn topology_test(
    spectrum: &PySpectrum,
    regime: &PyRegime,
    state: Vec<f64>,
    step: u64,
    theta: f64,
) -> PyResult<PyTestResult> {
    let report = asymptotics::covariance_report(&spectrum.inner, &regime.inner).map_err(err)?;
    let std = inference::standardizer(&report.sigma_hat).map_err(err)?;
    Ok(PyTestResult {
        inner: inference::topology_test(&spectrum.inner, &regime.inner, &std, &state, step, theta)
            .map_err(err)?,
    })
}

/// Exact law of Z after `steps` updates (N * steps <= 24).
#[pyfunction]
#[pyo3(signature = (net, gamma, c, z0, steps, n0 = None))]
fn enumerate_exact(
    net: &PyNetwork,
    gamma: f64,
    c: f64,
    z0: Vec<f64>,
    steps: u32,
    n0: Option<u64>,
) -> PyResult<PyExactLaw> {
    let sched = match n0 {
        Some(n0) => dynamics::ReinforcementSchedule::with_offset(gamma, c, n0),
        None => dynamics::ReinforcementSchedule::new(gamma, c),
    }
    .map_err(err)?;
    Ok(PyExactLaw {
        inner: dynamics::enumerate_exact(&net.inner, &sched, &z0, steps).map_err(err)?,
    })
}

/// Truncated product-sum whose limits the covariance kernels encode.
#[pyfunction]
#[pyo3(signature = (alpha1, alpha2, gamma, c, n, m0 = None))]
fn appendix_limit_partial(
    alpha1: Complex64,
    alpha2: Complex64,
    gamma: f64,
    c: f64,
    n: u64,
    m0: Option<u64>,
) -> PyResult<Complex64> {
    let m0 = match m0 {
        Some(m0) => m0,
        None => asymptotics::AppendixOracleInput::minimal_m0(gamma, c, alpha1, alpha2)
            .map_err(err)?,
    };
    let input = asymptotics::AppendixOracleInput {
        alpha1,
        alpha2,
        gamma,
        c,
        m0,
        n,
    };
    asymptotics::appendix_limit_partial(&input).map_err(err)
}

/// Run the Monte Carlo verification checks from an experiment config JSON.
/// Returns (all_passed, reports_json).
#[pyfunction]
fn run_checks(config_json: &str) -> PyResult<(bool, String)> {
    let config = harness::ExperimentConfig::from_json(config_json).map_err(err)?;
    let reports = harness::run_checks(&config).map_err(err)?;
    let all_passed = reports.iter().all(|r| r.passed);
    Ok((all_passed, harness::reports_to_json(&reports)))
}

#[pymodule]
fn rsp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyRegime>()?;
    m.add_class::<PyCovarianceReport>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyConfidenceInterval>()?;
    m.add_class::<PyTestResult>()?;
    m.add_class::<PyExactLaw>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(classify_regime, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_tilde_sq, m)?)?;
    m.add_function(wrap_pyfunction!(covariance_report, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_interval, m)?)?;
    m.add_function(wrap_pyfunction!(topology_test, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_exact, m)?)?;
    m.add_function(wrap_pyfunction!(appendix_limit_partial, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    Ok(())
}
