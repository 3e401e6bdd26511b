//! Python bindings for the core toolkit.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use pmpkit::checker::{self, Certificate as CoreCertificate};
use pmpkit::cli::{emit_report, Format};
use pmpkit::ekeland::{self, EkelandOptions};
use pmpkit::error::Category;
use pmpkit::{spike, ControlSignal, NBVMeasure, Problem as CoreProblem, TimeGrid};

create_exception!(pmpkit_py, PmpkitError, PyException);
create_exception!(pmpkit_py, ConfigError, PmpkitError);
create_exception!(pmpkit_py, SolverError, PmpkitError);

fn err(e: pmpkit::Error) -> PyErr {
    match e.category() {
        Category::Config => ConfigError::new_err(e.to_string()),
        Category::Solver => SolverError::new_err(e.to_string()),
    }
}

#[pyclass(frozen, name = "Problem")]
struct Problem(CoreProblem);

#[pymethods]
impl Problem {
    /// Parses a TOML (or JSON) problem definition.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        pmpkit::load_problem(text).map(Problem).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn j(&self) -> usize {
        self.0.j()
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.0.t_final
    }

    fn dynamics(&self, q: Vec<f64>, u: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        Ok(self.0.dynamics(&q, &u, t).map_err(err)?.iter().copied().collect())
    }
}

/// A piecewise-constant control: `values[k]` holds on `[nodes[k], nodes[k+1])`.
#[pyclass(frozen, from_py_object, name = "Control")]
#[derive(Clone)]
struct Control(ControlSignal);

#[pymethods]
impl Control {
    #[new]
    fn new(nodes: Vec<f64>, values: Vec<Vec<f64>>) -> PyResult<Self> {
        let grid = TimeGrid::new(nodes).map_err(err)?;
        ControlSignal::new(grid, values).map(Control).map_err(err)
    }

    #[staticmethod]
    fn constant(t_final: f64, cells: usize, value: Vec<f64>) -> PyResult<Self> {
        let grid = TimeGrid::uniform(t_final, cells).map_err(err)?;
        Ok(Control(ControlSignal::constant(&grid, &value)))
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.0.grid.nodes().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<Vec<f64>> {
        self.0.values.clone()
    }

    fn l1_distance(&self, other: &Control) -> f64 {
        self.0.l1_distance(&other.0)
    }
}

/// A nonnegative measure: `atoms[k]` at `nodes[k]` plus constant densities per cell.
#[pyclass(frozen, from_py_object, name = "Measure")]
#[derive(Clone)]
struct Measure(NBVMeasure);

#[pymethods]
impl Measure {
    #[new]
    fn new(nodes: Vec<f64>, atoms: Vec<f64>, densities: Vec<f64>) -> PyResult<Self> {
        let grid = TimeGrid::new(nodes).map_err(err)?;
        NBVMeasure::new(grid, atoms, densities).map(Measure).map_err(err)
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.0.grid.nodes().to_vec()
    }

    #[getter]
    fn atoms(&self) -> Vec<f64> {
        self.0.atoms.clone()
    }

    #[getter]
    fn densities(&self) -> Vec<f64> {
        self.0.densities.clone()
    }

    fn total(&self) -> f64 {
        self.0.total()
    }
}

#[pyclass(frozen, name = "Certificate")]
struct Certificate(CoreCertificate);

#[pymethods]
impl Certificate {
    #[getter]
    fn verdict(&self) -> String {
        self.0.verdict.to_string()
    }

    #[getter]
    fn passed(&self) -> bool {
        self.0.verdict.is_pass()
    }

    /// `(name, verdict, value, tolerance)` per condition.
    #[getter]
    fn conditions(&self) -> Vec<(String, String, f64, f64)> {
        self.0
            .conditions
            .iter()
            .map(|c| (c.name.to_string(), c.verdict.to_string(), c.value, c.tolerance))
            .collect()
    }

    #[getter]
    fn hamiltonian_sup(&self) -> Option<f64> {
        self.0.hamiltonian.as_ref().map(|h| h.sup)
    }

    #[getter]
    fn feasibility(&self) -> f64 {
        self.0.feasibility
    }

    #[getter]
    fn slackness(&self) -> Vec<f64> {
        self.0.slackness.iter().map(|s| s.residual).collect()
    }

    #[pyo3(signature = (structured = false))]
    fn report(&self, structured: bool) -> String {
        let format = if structured { Format::Structured } else { Format::Text };
        String::from_utf8(emit_report(&self.0, format)).expect("reports are UTF-8")
    }
}

fn solve_grid(problem: &CoreProblem, u: &ControlSignal, cells: Option<usize>) -> PyResult<TimeGrid> {
    Ok(match cells {
        Some(n) => TimeGrid::uniform(problem.t_final, n).map_err(err)?.union_with(u.grid.nodes()),
        None => u.grid.clone(),
    })
}

/// Integrates the state equation; returns `(t, states)`.
#[pyfunction]
#[pyo3(signature = (problem, control, cells = None))]
fn solve_forward(problem: &Problem, control: &Control, cells: Option<usize>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let grid = solve_grid(&problem.0, &control.0, cells)?;
    let traj = pmpkit::solve_forward(&problem.0, &control.0, &grid).map_err(err)?;
    Ok((grid.nodes().to_vec(), traj.states.iter().map(|q| q.iter().copied().collect()).collect()))
}

fn candidate(control: &Control, psi: f64, eta: Vec<Measure>) -> checker::Candidate {
    checker::Candidate { u: control.0.clone(), psi, eta: eta.into_iter().map(|m| m.0).collect() }
}

/// Adjoint path; returns `(t, left, right)` limits at every node.
#[pyfunction]
#[pyo3(signature = (problem, control, psi = 1.0, eta = Vec::new()))]
fn assemble_adjoint(
    problem: &Problem,
    control: &Control,
    psi: f64,
    eta: Vec<Measure>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let p = checker::assemble_adjoint(&problem.0, &candidate(control, psi, eta)).map_err(err)?;
    let n = p.grid.n_cells();
    let vecs = |v: &[nalgebra::DVector<f64>]| v.iter().map(|x| x.iter().copied().collect()).collect();
    let mut right = p.right.clone();
    right[n] = p.value[n].clone();
    Ok((p.grid.nodes().to_vec(), vecs(&p.left), vecs(&right)))
}

/// Verifies the necessary conditions; never raises for solver failures
/// (those give an `ERROR` verdict).
#[pyfunction]
#[pyo3(signature = (problem, control, psi = 1.0, eta = Vec::new(), hamiltonian_tol = None, slackness_tol = None))]
fn check_certificate(
    problem: &Problem,
    control: &Control,
    psi: f64,
    eta: Vec<Measure>,
    hamiltonian_tol: Option<f64>,
    slackness_tol: Option<f64>,
) -> Certificate {
    let mut tol = checker::Tolerances::default().with_overrides(&problem.0.tolerances);
    if let Some(v) = hamiltonian_tol {
        tol.hamiltonian = v;
    }
    if let Some(v) = slackness_tol {
        tol.slackness = v;
    }
    Certificate(checker::check_certificate(&problem.0, &candidate(control, psi, eta), &tol))
}

/// Spike set for cellwise-constant `h` on a uniform grid; returns its intervals.
#[pyfunction]
fn build_qrho(h: Vec<Vec<f64>>, rho: f64, t_final: f64) -> PyResult<Vec<(f64, f64)>> {
    let grid = TimeGrid::uniform(t_final, h.len()).map_err(err)?;
    let h: Vec<_> = h.into_iter().map(nalgebra::DVector::from_vec).collect();
    Ok(pmpkit::build_qrho(&h, rho, &grid).map_err(err)?.intervals)
}

/// `(rho, err)` rows of the spike-variation differentiability probe.
#[pyfunction]
#[pyo3(signature = (problem, control, variation, rhos, cells = None))]
fn differentiability_probe(
    problem: &Problem,
    control: &Control,
    variation: &Control,
    rhos: Vec<f64>,
    cells: Option<usize>,
) -> PyResult<Vec<(f64, f64)>> {
    let grid = solve_grid(&problem.0, &control.0, cells)?.union_with(variation.0.grid.nodes());
    spike::differentiability_probe(&problem.0, &control.0, &variation.0, &rhos, &grid).map_err(err)
}

/// Penalized descent from `control`; returns the final control, the history
/// as `(iter, J, eps, feasibility, cost)` rows, and multiplier estimates
/// `(psi, [Measure])`.
#[pyfunction]
#[pyo3(signature = (problem, control, max_iterations = 500))]
#[allow(clippy::type_complexity)]
fn ekeland_descend(
    problem: &Problem,
    control: &Control,
    max_iterations: usize,
) -> PyResult<(Control, Vec<(usize, f64, f64, f64, f64)>, (f64, Vec<Measure>))> {
    let grid = control.0.grid.clone();
    let options = EkelandOptions { max_iterations, ..EkelandOptions::default() };
    let d = ekeland::ekeland_descend(&problem.0, &control.0, &grid, &options).map_err(err)?;
    let fine = grid.union_with(d.u.grid.nodes());
    let (psi, eta) = ekeland::extract_multipliers(&problem.0, &d.u, d.reference, d.eps, &fine).map_err(err)?;
    let history = d.history.iter().map(|h| (h.iter, h.j, h.eps, h.feasibility, h.cost)).collect();
    Ok((Control(d.u), history, (psi, eta.into_iter().map(Measure).collect())))
}

#[pymodule]
fn pmpkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PmpkitError", m.py().get_type::<PmpkitError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_class::<Problem>()?;
    m.add_class::<Control>()?;
    m.add_class::<Measure>()?;
    m.add_class::<Certificate>()?;
    m.add_function(wrap_pyfunction!(solve_forward, m)?)?;
    m.add_function(wrap_pyfunction!(assemble_adjoint, m)?)?;
    m.add_function(wrap_pyfunction!(check_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(build_qrho, m)?)?;
    m.add_function(wrap_pyfunction!(differentiability_probe, m)?)?;
    m.add_function(wrap_pyfunction!(ekeland_descend, m)?)?;
    Ok(())
}
