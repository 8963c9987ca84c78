//! Python module `chetaev_lab`: grids, states, evolution and the main analyses.

use std::path::PathBuf;

use chetaev_core::dynamics::{self, EvolverConfig, Scheme, TimeSeries};
use chetaev_core::observables::{self, IdentityStatus};
use chetaev_core::polar::{self, Region};
use chetaev_core::stability::{self, HamiltonianSystem};
use chetaev_core::trajectories::{self as traj, SamplingLaw};
use chetaev_core::{wavefunctions as wf, Boundary, ClassicalState, ComplexField, Error};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(frozen, skip_from_py_object, module = "chetaev_lab")]
#[derive(Clone)]
pub struct Grid(chetaev_core::Grid);

#[pymethods]
impl Grid {
    /// One-dimensional grid; `boundary` is "periodic" or "box".
    #[new]
    #[pyo3(signature = (min, max, points, boundary = "periodic"))]
    fn new(min: f64, max: f64, points: usize, boundary: &str) -> PyResult<Self> {
        let b = match boundary {
            "periodic" => Boundary::Periodic,
            "box" => Boundary::Box,
            other => return Err(PyValueError::new_err(format!("unknown boundary `{other}`"))),
        };
        chetaev_core::Grid::line(min, max, points, b).map(Grid).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing(0)
    }

    #[getter]
    fn boundary(&self) -> &'static str {
        self.0.boundary().name()
    }

    fn coords(&self) -> Vec<f64> {
        self.0.coords(0)
    }

    fn __repr__(&self) -> String {
        let a = self.0.axes()[0];
        format!("Grid({}, {}, {}, {:?})", a.min, a.max, self.0.len(), self.0.boundary().name())
    }
}

#[pyclass(frozen, skip_from_py_object, module = "chetaev_lab")]
#[derive(Clone)]
pub struct Metric(chetaev_core::Metric);

#[pymethods]
impl Metric {
    #[new]
    #[pyo3(signature = (mass = 1.0, hbar = 1.0))]
    fn new(mass: f64, hbar: f64) -> PyResult<Self> {
        chetaev_core::Metric::new(&[mass], hbar).map(Metric).map_err(err)
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.0.mass(0)
    }

    #[getter]
    fn hbar(&self) -> f64 {
        self.0.hbar()
    }
}

#[pyclass(frozen, skip_from_py_object, module = "chetaev_lab")]
#[derive(Clone)]
pub struct Potential(chetaev_core::Potential);

#[pymethods]
impl Potential {
    #[staticmethod]
    fn harmonic(omega: f64) -> PyResult<Self> {
        chetaev_core::Potential::harmonic(omega).map(Potential).map_err(err)
    }

    #[staticmethod]
    fn inverted_harmonic(omega: f64) -> PyResult<Self> {
        chetaev_core::Potential::inverted_harmonic(omega).map(Potential).map_err(err)
    }

    #[staticmethod]
    fn free() -> Self {
        Potential(chetaev_core::Potential::free())
    }

    #[staticmethod]
    fn box_well() -> PyResult<Self> {
        chetaev_core::Potential::new(chetaev_core::PotentialKind::BoxWell)
            .map(Potential)
            .map_err(err)
    }

    #[pyo3(signature = (q, metric, t = 0.0))]
    fn value(&self, q: f64, metric: &Metric, t: f64) -> f64 {
        self.0.value(&[q], t, &metric.0)
    }
}

/// A sampled wavefunction with its time stamp.
#[pyclass(frozen, skip_from_py_object, module = "chetaev_lab")]
#[derive(Clone)]
pub struct State(ComplexField);

#[pymethods]
impl State {
    #[staticmethod]
    #[pyo3(signature = (grid, metric, center = 0.0, variance = 1.0, momentum = 0.0, t = 0.0))]
    fn gaussian(grid: &Grid, metric: &Metric, center: f64, variance: f64, momentum: f64, t: f64) -> PyResult<Self> {
        wf::free_gaussian(&grid.0, &metric.0, &[center], &[variance], &[momentum], t)
            .and_then(ComplexField::normalized)
            .map(State)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, metric, n, omega = 1.0))]
    fn oscillator(grid: &Grid, metric: &Metric, n: usize, omega: f64) -> PyResult<Self> {
        wf::oscillator_eigenstate(&grid.0, &metric.0, omega, &[n], 0.0).map(State).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (grid, metric, amplitude, omega = 1.0))]
    fn coherent(grid: &Grid, metric: &Metric, amplitude: f64, omega: f64) -> PyResult<Self> {
        wf::coherent_state(&grid.0, &metric.0, omega, &[amplitude], 0.0)
            .and_then(ComplexField::normalized)
            .map(State)
            .map_err(err)
    }

    #[staticmethod]
    fn plane_wave(grid: &Grid, metric: &Metric, momentum: f64) -> PyResult<Self> {
        wf::plane_wave(&grid.0, &metric.0, &[momentum], 0.0).map(State).map_err(err)
    }

    #[staticmethod]
    fn box_eigenstate(grid: &Grid, metric: &Metric, n: usize) -> PyResult<Self> {
        wf::box_eigenstate(&grid.0, &metric.0, &[n], 0.0).map(State).map_err(err)
    }

    /// Build from sampled values; they are used as given.
    #[staticmethod]
    #[pyo3(signature = (grid, values, t = 0.0))]
    fn from_values(grid: &Grid, values: Vec<Complex64>, t: f64) -> PyResult<Self> {
        ComplexField::new(grid.0.clone(), values, t).map(State).map_err(err)
    }

    #[getter]
    fn time(&self) -> f64 {
        self.0.time()
    }

    #[getter]
    fn grid(&self) -> Grid {
        Grid(self.0.grid().clone())
    }

    fn values(&self) -> Vec<Complex64> {
        self.0.values().to_vec()
    }

    fn density(&self) -> Vec<f64> {
        self.0.density()
    }

    fn norm_sqr(&self) -> f64 {
        self.0.norm_sqr()
    }

    fn normalized(&self) -> PyResult<Self> {
        self.0.clone().normalized().map(State).map_err(err)
    }
}

/// Stored frames of an evolution.
#[pyclass(frozen, module = "chetaev_lab")]
pub struct Series(TimeSeries);

#[pymethods]
impl Series {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn times(&self) -> Vec<f64> {
        self.0.times()
    }

    fn frame(&self, k: usize) -> PyResult<State> {
        self.0
            .frames()
            .get(k)
            .cloned()
            .map(State)
            .ok_or_else(|| PyValueError::new_err(format!("frame {k} out of range ({} stored)", self.0.len())))
    }
}

fn scheme(name: Option<&str>, grid: &chetaev_core::Grid) -> PyResult<Scheme> {
    match name {
        None if grid.is_periodic() => Ok(Scheme::SplitStepSpectral),
        None => Ok(Scheme::CrankNicolson),
        Some("split_step") => Ok(Scheme::SplitStepSpectral),
        Some("crank_nicolson") => Ok(Scheme::CrankNicolson),
        Some(other) => Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
    }
}

fn region(mass_fraction: Option<f64>) -> Region {
    mass_fraction.map_or(Region::All, Region::Mass)
}

/// Propagate `psi` to `t_final`, storing every `store_every` steps.
#[pyfunction]
#[pyo3(signature = (psi, potential, metric, dt, t_final, store_every = 1, scheme = None))]
fn evolve(
    py: Python<'_>,
    psi: &State,
    potential: &Potential,
    metric: &Metric,
    dt: f64,
    t_final: f64,
    store_every: usize,
    scheme: Option<&str>,
) -> PyResult<Series> {
    let cfg = EvolverConfig::new(dt, self::scheme(scheme, psi.0.grid())?, t_final, store_every).map_err(err)?;
    py.detach(|| dynamics::evolve(&psi.0, &potential.0, &metric.0, &cfg))
        .map(Series)
        .map_err(err)
}

#[pyfunction]
fn energy(psi: &State, potential: &Potential, metric: &Metric) -> PyResult<f64> {
    dynamics::energy(&psi.0, &potential.0, &metric.0).map_err(err)
}

/// Lowest `n_states` energies and eigenstates on a box grid.
#[pyfunction]
fn solve_stationary(
    py: Python<'_>,
    potential: &Potential,
    metric: &Metric,
    grid: &Grid,
    n_states: usize,
) -> PyResult<(Vec<f64>, Vec<State>)> {
    let s = py
        .detach(|| dynamics::solve_stationary(&potential.0, &metric.0, &grid.0, n_states))
        .map_err(err)?;
    Ok((s.energies, s.states.into_iter().map(State).collect()))
}

/// `Q = −(ħ²/2m)ΔA/A` per node; `None` where the amplitude is masked.
#[pyfunction]
fn quantum_potential(psi: &State, metric: &Metric) -> PyResult<Vec<Option<f64>>> {
    let q = polar::quantum_potential_psi(&psi.0, &metric.0).map_err(err)?;
    Ok((0..q.values().len())
        .map(|i| (!q.is_masked(i)).then(|| q.values()[i]))
        .collect())
}

/// Amplitude and action of the polar decomposition; action is `None` where masked.
#[pyfunction]
fn decompose(psi: &State, metric: &Metric) -> PyResult<(Vec<f64>, Vec<Option<f64>>)> {
    let p = polar::decompose(&psi.0, &metric.0).map_err(err)?;
    let s = p
        .action()
        .iter()
        .zip(p.mask())
        .map(|(s, m)| (!m).then_some(*s))
        .collect();
    Ok((p.amplitude().to_vec(), s))
}

#[pyfunction]
fn perturbation_action(psi: &State, metric: &Metric) -> PyResult<f64> {
    polar::perturbation_action(&psi.0, &metric.0).map_err(err)
}

#[pyfunction]
fn moments<'py>(py: Python<'py>, psi: &State, metric: &Metric) -> PyResult<Bound<'py, PyDict>> {
    let m = observables::moments(&psi.0, &metric.0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("time", m.time)?;
    d.set_item("mean_x", m.mean_x[0])?;
    d.set_item("var_x", m.var_x[0])?;
    d.set_item("mean_p", m.mean_p[0])?;
    d.set_item("var_p", m.var_p[0])?;
    d.set_item("product", m.product[0])?;
    d.set_item("mean_q", m.mean_q)?;
    Ok(d)
}

#[pyfunction]
fn uncertainty<'py>(py: Python<'py>, psi: &State, metric: &Metric) -> PyResult<Bound<'py, PyDict>> {
    let u = observables::uncertainty_identity(&psi.0, &metric.0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("var_x", u.moments.var_x[0])?;
    d.set_item("var_p", u.moments.var_p[0])?;
    d.set_item("mean_q", u.moments.mean_q)?;
    d.set_item("gap", u.gap[0])?;
    d.set_item("product", u.moments.product[0])?;
    d.set_item("product_q", u.product_q[0])?;
    d.set_item("floor", u.floor)?;
    d.set_item("real_state", u.real_state)?;
    d.set_item("localized", u.localized)?;
    let status = match u.status {
        IdentityStatus::Asserted => "asserted",
        IdentityStatus::Reported => "reported",
        IdentityStatus::NonNormalizableLimit => "non_normalizable_limit",
    };
    d.set_item("status", status)?;
    d.set_item("identity_holds", u.identity_holds)?;
    d.set_item("inequality_holds", u.inequality_holds)?;
    d.set_item("passed", u.passed())?;
    Ok(d)
}

/// Sup norms of the continuity residuals over the interior stored times.
#[pyfunction]
#[pyo3(signature = (series, metric, mass_fraction = None))]
fn continuity_residual<'py>(
    py: Python<'py>,
    series: &Series,
    metric: &Metric,
    mass_fraction: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = polar::continuity_residual(&series.0, &metric.0, region(mass_fraction)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("full_linf", r.full.linf)?;
    d.set_item("reduced_linf", r.reduced.linf)?;
    d.set_item("amplitude_transport_linf", r.amplitude_transport.linf)?;
    d.set_item("identity_gap", r.identity_gap)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (series, potential, metric, mass_fraction = None))]
fn qhj_residual<'py>(
    py: Python<'py>,
    series: &Series,
    potential: &Potential,
    metric: &Metric,
    mass_fraction: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = polar::qhj_residual(&series.0, &potential.0, &metric.0, region(mass_fraction)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("amplitude_form_linf", r.amplitude_form.linf)?;
    d.set_item("density_form_linf", r.density_form.linf)?;
    d.set_item("form_gap", r.form_gap)?;
    Ok(d)
}

/// Largest `|expression − (i/ħ)L|` for one state.
#[pyfunction]
fn chetaev_identity(psi: &State, metric: &Metric) -> PyResult<f64> {
    polar::chetaev_condition_psi(&psi.0, &metric.0)
        .map(|r| r.identity_residual)
        .map_err(err)
}

/// Bohmian trajectories from `|ψ₀|²`; returns (times, positions[time][trajectory]).
#[pyfunction]
#[pyo3(signature = (series, metric, n_traj, seed = 0, substeps = traj::DEFAULT_SUBSTEPS))]
fn trajectories(
    py: Python<'_>,
    series: &Series,
    metric: &Metric,
    n_traj: usize,
    seed: u64,
    substeps: usize,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let ens = py
        .detach(|| traj::integrate_trajectories_with(&series.0, &metric.0, &SamplingLaw::Density, n_traj, seed, substeps))
        .map_err(err)?;
    let pos = ens.positions.iter().map(|row| row.iter().map(|q| q[0]).collect()).collect();
    Ok((ens.times, pos))
}

/// L1 distance between the trajectory histogram and `|ψ_t|²` at each stored time.
#[pyfunction]
#[pyo3(signature = (series, metric, n_traj, seed = 0, substeps = traj::DEFAULT_SUBSTEPS))]
fn equivariance(
    py: Python<'_>,
    series: &Series,
    metric: &Metric,
    n_traj: usize,
    seed: u64,
    substeps: usize,
) -> PyResult<Vec<f64>> {
    py.detach(|| {
        let ens = traj::integrate_trajectories_with(&series.0, &metric.0, &SamplingLaw::Density, n_traj, seed, substeps)?;
        traj::equivariance_check(&ens, &series.0)
    })
    .map_err(err)
}

/// Modern Lyapunov exponents of the classical flow from `(q0, p0)`.
#[pyfunction]
#[pyo3(signature = (potential, metric, q0, p0, dt, t_final, tolerance = stability::DEFAULT_EXPONENT_TOLERANCE))]
fn exponents<'py>(
    py: Python<'py>,
    potential: &Potential,
    metric: &Metric,
    q0: f64,
    p0: f64,
    dt: f64,
    t_final: f64,
    tolerance: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let sys = HamiltonianSystem::new(metric.0.clone(), potential.0.clone()).map_err(err)?;
    let r = py
        .detach(|| {
            let s0 = ClassicalState::new(vec![q0], vec![p0], 0.0)?;
            let base = stability::integrate_hamiltonian(&sys, &s0, dt, t_final)?;
            stability::characteristic_numbers(&sys, &base, &stability::canonical_basis(1, 0.0), None, tolerance)
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("exponents", r.exponents)?;
    d.set_item("characteristic_numbers", r.characteristic_numbers)?;
    d.set_item("pairing_inequality_holds", r.pairing_inequality_holds)?;
    d.set_item("stable", r.stable)?;
    Ok(d)
}

/// `J = ∫Q|ψ|²` for normalized Gaussians of the given position variances.
#[pyfunction]
#[pyo3(signature = (grid, metric, variances, center = 0.0))]
fn gaussian_width_sweep(grid: &Grid, metric: &Metric, variances: Vec<f64>, center: f64) -> PyResult<Vec<(f64, f64)>> {
    let r = polar::perturbation_action_sweep(&polar::TrialFamily::GaussianVariance { center }, &variances, &grid.0, &metric.0)
        .map_err(err)?;
    Ok(r.points.iter().map(|p| (p.parameter, p.j)).collect())
}

#[pyfunction]
fn list_scenarios() -> Vec<(&'static str, &'static str)> {
    chetaev_runner::scenarios::SCENARIOS
        .iter()
        .map(|s| (s.id, s.description))
        .collect()
}

/// Run a scenario id or config path into `out`; returns (status, run directory).
#[pyfunction]
#[pyo3(signature = (target, out, seed = None))]
fn run_scenario(py: Python<'_>, target: &str, out: PathBuf, seed: Option<u64>) -> PyResult<(String, PathBuf)> {
    let mut cfg = chetaev_runner::load(target).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(s) = seed {
        cfg.analysis.seed = s;
    }
    let opts = chetaev_runner::RunOptions {
        out_root: out,
        quiet: true,
    };
    let outcome = py
        .detach(|| chetaev_runner::run(&cfg, &opts))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let status = match outcome.status {
        chetaev_runner::RunStatus::Passed => "passed",
        chetaev_runner::RunStatus::ChecksFailed => "checks_failed",
        chetaev_runner::RunStatus::Error => "error",
    };
    Ok((status.to_string(), outcome.dir))
}

#[pymodule]
fn chetaev_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Metric>()?;
    m.add_class::<Potential>()?;
    m.add_class::<State>()?;
    m.add_class::<Series>()?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(solve_stationary, m)?)?;
    m.add_function(wrap_pyfunction!(quantum_potential, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(perturbation_action, m)?)?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(uncertainty, m)?)?;
    m.add_function(wrap_pyfunction!(continuity_residual, m)?)?;
    m.add_function(wrap_pyfunction!(qhj_residual, m)?)?;
    m.add_function(wrap_pyfunction!(chetaev_identity, m)?)?;
    m.add_function(wrap_pyfunction!(trajectories, m)?)?;
    m.add_function(wrap_pyfunction!(equivariance, m)?)?;
    m.add_function(wrap_pyfunction!(exponents, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_width_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(list_scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
