//! Python module `glrom`: configuration, sweeps, offline artifacts and the
//! reduced model, plus the POD and DEIM primitives.

use std::path::PathBuf;

use glrom_core::harness::{
    build_online, example_variants, harvest, offline_stage, ExperimentSpec, Problem, ResultRow, Runner, Variant,
};
use glrom_core::reduction::{self, PodSelection};
use glrom_core::rom::{solve_rom, RomSystem};
use glrom_core::{artifacts, Error};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn from_matrix(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Experiment configuration (the TOML schema of the command line).
#[pyclass(name = "Spec", from_py_object)]
#[derive(Clone)]
struct PySpec {
    inner: ExperimentSpec,
}

#[pymethods]
impl PySpec {
    #[staticmethod]
    fn example(id: u8) -> PyResult<Self> {
        Ok(Self { inner: ExperimentSpec::example(id).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentSpec::from_toml(text).map_err(py_err)? })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    /// Fine and coarse cell counts, `((nx, ny), (cx, cy))`.
    #[getter]
    fn grid(&self) -> ((usize, usize), (usize, usize)) {
        let g = &self.inner.grid;
        ((g.fine[0], g.fine[1]), (g.coarse[0], g.coarse[1]))
    }

    #[setter]
    fn set_grid(&mut self, grid: ((usize, usize), (usize, usize))) {
        self.inner.grid.fine = [grid.0 .0, grid.0 .1];
        self.inner.grid.coarse = [grid.1 .0, grid.1 .1];
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.permeability.eta
    }

    #[setter]
    fn set_eta(&mut self, eta: f64) {
        self.inner.permeability.eta = eta;
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.time.t_final
    }

    #[setter]
    fn set_t_final(&mut self, t: f64) {
        self.inner.time.t_final = t;
    }

    #[getter]
    fn offline_mu(&self) -> Vec<f64> {
        self.inner.offline.mu_values.clone()
    }

    #[setter]
    fn set_offline_mu(&mut self, mu: Vec<f64>) {
        self.inner.offline.mu_values = mu;
    }

    #[getter]
    fn online_mu(&self) -> Vec<f64> {
        self.inner.online.mu_values.clone()
    }

    #[setter]
    fn set_online_mu(&mut self, mu: Vec<f64>) {
        self.inner.online.mu_values = mu;
        self.inner.random_mu = None;
    }

    /// `(pod_modes, local_points, global_points)` per offline `mu`.
    #[getter]
    fn reduction(&self) -> (usize, usize, usize) {
        let r = &self.inner.reduction;
        (r.pod_modes, r.local_points, r.global_points)
    }

    #[setter]
    fn set_reduction(&mut self, r: (usize, usize, usize)) {
        self.inner.reduction.pod_modes = r.0;
        self.inner.reduction.local_points = r.1;
        self.inner.reduction.global_points = r.2;
    }

    fn __repr__(&self) -> String {
        format!("Spec(example={:?}, grid={:?})", self.inner.example, self.grid())
    }
}

fn row_dict<'py>(py: Python<'py>, r: &ResultRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("label", &r.label)?;
    d.set_item("offline_mu", r.offline_mu.clone())?;
    d.set_item("online_mu", r.online_mu)?;
    d.set_item("pod_modes", r.pod_modes)?;
    d.set_item("local_points", r.local_points)?;
    d.set_item("global_points", r.global_points)?;
    d.set_item("times", r.times.clone())?;
    d.set_item("errors", r.errors.clone())?;
    d.set_item("steady_error", r.steady_error())?;
    d.set_item("t_fine", r.t_fine)?;
    d.set_item("t_gl", r.t_gl)?;
    d.set_item("r_percent", r.ratio())?;
    d.set_item("failure", r.failure.clone())?;
    Ok(d)
}

fn run_rows<'py>(py: Python<'py>, spec: &ExperimentSpec, variants: &[Variant]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = py
        .detach(|| Runner::new(spec).and_then(|mut r| r.run(variants)))
        .map_err(py_err)?;
    rows.iter().map(|r| row_dict(py, r)).collect()
}

/// Reduced model against the fine reference for the base configuration.
#[pyfunction]
fn compare<'py>(py: Python<'py>, spec: &PySpec) -> PyResult<Vec<Bound<'py, PyDict>>> {
    run_rows(py, &spec.inner, &[Variant::base("compare")])
}

/// All rows of example `id`, optionally on a modified configuration.
#[pyfunction]
#[pyo3(signature = (id, spec=None))]
fn sweep<'py>(py: Python<'py>, id: u8, spec: Option<&PySpec>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = match spec {
        Some(s) => s.inner.clone(),
        None => ExperimentSpec::example(id).map_err(py_err)?,
    };
    run_rows(py, &spec, &example_variants(id))
}

/// Runs the offline stage and writes the artifact directory.
#[pyfunction]
fn offline(py: Python<'_>, spec: &PySpec, dir: PathBuf) -> PyResult<(usize, usize, usize)> {
    let spec = &spec.inner;
    py.detach(|| {
        let problem = Problem::new(spec)?;
        let stage = offline_stage(&problem, &spec.offline, &spec.gmsfem, &spec.time)?;
        let h = harvest(&problem, &stage, &spec.time, spec.reduction.local_points)?;
        let (n_r, l_g) = spec.reduction.totals(spec.offline.mu_values.len());
        let rom = build_online(&problem, &stage, &h, n_r, l_g)?;
        artifacts::save_offline(&dir, spec, &problem, &stage, &h, &rom)?;
        Ok((stage.space.dim(), rom.dim(), rom.deim.dim()))
    })
    .map_err(py_err)
}

/// Reduced model loaded from an artifact directory.
#[pyclass(name = "Rom")]
struct PyRom {
    rom: RomSystem,
    spec: ExperimentSpec,
    problem: Problem,
}

#[pymethods]
impl PyRom {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let spec = artifacts::load_config(&dir).map_err(py_err)?;
        let problem = Problem::new(&spec).map_err(py_err)?;
        let rom = artifacts::load_rom(&dir).map_err(py_err)?;
        Ok(Self { rom, spec, problem })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.rom.dim()
    }

    #[getter]
    fn global_points(&self) -> Vec<usize> {
        self.rom.deim.indices.clone()
    }

    /// Times and reduced coordinates for one online `mu`.
    fn solve(&self, py: Python<'_>, mu: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let theta = glrom_core::model::ParameterSet { mu_values: vec![mu], ..self.spec.online.clone() };
        let p = &self.problem;
        let traj = py
            .detach(|| solve_rom(&self.rom, &p.mesh, &p.kappa, &p.ops, &theta, &self.spec.time))
            .map_err(py_err)?
            .remove(0);
        Ok((traj.times, traj.states.iter().map(|a| a.iter().copied().collect()).collect()))
    }

    /// Interior fine-node values of `Phi Psi alpha`.
    fn downscale(&self, alpha: Vec<f64>) -> PyResult<Vec<f64>> {
        if alpha.len() != self.rom.dim() {
            return Err(py_err(Error::DimensionMismatch { expected: self.rom.dim(), got: alpha.len() }));
        }
        Ok(self.rom.downscale(&DVector::from_vec(alpha)).iter().copied().collect())
    }

    /// Row gathers since the last reset.
    fn gathers(&self) -> usize {
        self.rom.evaluator.gathers()
    }

    fn reset_counter(&self) {
        self.rom.evaluator.reset_counter();
    }
}

/// Leading `modes` POD modes of the columns of `snapshots` and their eigenvalues.
#[pyfunction]
fn pod(snapshots: Vec<Vec<f64>>, modes: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let b = reduction::pod(&to_matrix(snapshots)?, PodSelection::Modes(modes)).map_err(py_err)?;
    Ok((from_matrix(&b.modes), b.eigenvalues))
}

/// Greedy interpolation rows and the projector `Psi (P^T Psi)^-1`.
#[pyfunction]
fn deim_select(basis: Vec<Vec<f64>>) -> PyResult<(Vec<usize>, Vec<Vec<f64>>)> {
    let d = reduction::deim_select(&to_matrix(basis)?).map_err(py_err)?;
    Ok((d.indices, from_matrix(&d.projector)))
}

#[pymodule]
fn glrom(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpec>()?;
    m.add_class::<PyRom>()?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(offline, m)?)?;
    m.add_function(wrap_pyfunction!(pod, m)?)?;
    m.add_function(wrap_pyfunction!(deim_select, m)?)?;
    Ok(())
}
