//! Python bindings for `fracpmp`.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use fracpmp::fracops::{self, MultiOrder, SampledPath, Side, TimeGrid};
use fracpmp::pmp::{self, NeedleVariation, PmpSolution, SweepConfig};
use fracpmp::problem::{self as model, ProblemSpec};
use fracpmp::specfun::{self, MittagLefflerParams};
use fracpmp::Error;

create_exception!(pyfracpmp, SolverError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_)
        | Error::Dimension(_)
        | Error::Invalid(_)
        | Error::NotFound(_)
        | Error::Config { .. }
        | Error::Expr(_) => PyValueError::new_err(e.to_string()),
        _ => SolverError::new_err(e.to_string()),
    }
}

fn side(name: &str) -> PyResult<Side> {
    match name {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        _ => Err(PyValueError::new_err(format!("side must be 'left' or 'right', got {name:?}"))),
    }
}

fn scalar_path(values: Vec<f64>, a: f64, b: f64) -> PyResult<SampledPath> {
    if values.len() < 3 {
        return Err(PyValueError::new_err("need at least 3 samples"));
    }
    let grid = TimeGrid::new(a, b, values.len() - 1).map_err(to_py)?;
    SampledPath::new(grid, vec![values]).map_err(to_py)
}

#[pyfunction]
fn gamma(x: f64) -> PyResult<f64> {
    specfun::gamma_fn(x).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (z, alpha, beta = 1.0))]
fn mittag_leffler(z: f64, alpha: f64, beta: f64) -> PyResult<f64> {
    let params = MittagLefflerParams::new(alpha, beta).map_err(to_py)?;
    specfun::mittag_leffler(params, z).map_err(to_py)
}

/// Fractional integral of uniform samples of one function on `[a, b]`.
#[pyfunction]
#[pyo3(signature = (values, a, b, order, side = "left"))]
fn frac_integral(values: Vec<f64>, a: f64, b: f64, order: f64, side: &str) -> PyResult<Vec<f64>> {
    let orders = MultiOrder::new(vec![order]).map_err(to_py)?;
    let r = fracops::frac_integral(&scalar_path(values, a, b)?, &orders, self::side(side)?).map_err(to_py)?;
    Ok(r.component(0).to_vec())
}

/// L1 Caputo derivative; the endpoint where it is undefined copies its neighbor.
#[pyfunction]
#[pyo3(signature = (values, a, b, order, side = "left"))]
fn caputo_derivative(values: Vec<f64>, a: f64, b: f64, order: f64, side: &str) -> PyResult<Vec<f64>> {
    let orders = MultiOrder::new(vec![order]).map_err(to_py)?;
    let r = fracops::caputo_derivative(&scalar_path(values, a, b)?, &orders, self::side(side)?).map_err(to_py)?;
    Ok(r.component(0).to_vec())
}

#[pyclass(module = "pyfracpmp")]
struct Problem {
    spec: ProblemSpec,
}

#[pymethods]
impl Problem {
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        Ok(Self { spec: model::builtin(name).map_err(to_py)? })
    }

    #[staticmethod]
    fn builtin_names() -> Vec<String> {
        model::builtin_problems().into_iter().map(|p| p.name).collect()
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { spec: model::parse_problem(text).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { spec: model::load_problem(&path).map_err(to_py)? })
    }

    fn to_toml(&self) -> String {
        self.spec.to_toml()
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    #[getter]
    fn orders(&self) -> Vec<f64> {
        self.spec.orders.as_slice().to_vec()
    }

    #[getter]
    fn horizon(&self) -> (f64, f64) {
        (self.spec.a, self.spec.b)
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.spec.state_dim()
    }

    #[getter]
    fn control_dim(&self) -> usize {
        self.spec.control_dim()
    }

    /// Runs the forward-backward sweep; unset arguments come from the problem.
    #[pyo3(signature = (n_steps = None, relaxation = None, tol = None, max_iters = None))]
    fn solve(
        &self,
        py: Python<'_>,
        n_steps: Option<usize>,
        relaxation: Option<f64>,
        tol: Option<f64>,
        max_iters: Option<usize>,
    ) -> PyResult<Solution> {
        let mut spec = self.spec.clone();
        let s = &mut spec.solver;
        s.n_steps = n_steps.unwrap_or(s.n_steps);
        s.relaxation = relaxation.unwrap_or(s.relaxation);
        s.control_tol = tol.unwrap_or(s.control_tol);
        s.max_iters = max_iters.unwrap_or(s.max_iters);
        let sol = py
            .detach(|| {
                let grid = spec.grid(spec.solver.n_steps)?;
                pmp::forward_backward_sweep(&spec, &grid, &SweepConfig::from_settings(&spec.solver))
            })
            .map_err(to_py)?;
        Ok(Solution { spec, sol })
    }

    fn __repr__(&self) -> String {
        format!("Problem({:?}, orders={:?})", self.spec.name, self.spec.orders.as_slice())
    }
}

#[pyclass(module = "pyfracpmp")]
struct Solution {
    spec: ProblemSpec,
    sol: PmpSolution,
}

#[pymethods]
impl Solution {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.sol.grid().nodes().collect()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.sol.x_star.components().to_vec()
    }

    #[getter]
    fn u(&self) -> Vec<Vec<f64>> {
        self.sol.u_star.components().to_vec()
    }

    /// Adjoint components; blown-up endpoint values are flagged in `flagged`.
    #[getter]
    fn adjoint(&self) -> Vec<Vec<f64>> {
        self.sol.lambda.components().to_vec()
    }

    #[getter]
    fn flagged(&self) -> Vec<bool> {
        self.sol.lambda.flags().to_vec()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.sol.objective
    }

    #[getter]
    fn converged(&self) -> bool {
        self.sol.converged
    }

    #[getter]
    fn sweep_iterations(&self) -> usize {
        self.sol.sweep_iterations
    }

    #[pyo3(signature = (probe_points = 256))]
    fn pmp_residual(&self, probe_points: usize) -> PyResult<f64> {
        pmp::pmp_residual(&self.spec, &self.sol, probe_points).map_err(to_py)
    }

    /// Needle variation `u = v` on `theta_steps` cells from node `tau`.
    #[pyo3(signature = (tau, v, theta_steps, gap_window_start = None))]
    fn needle_experiment(
        &self,
        tau: usize,
        v: Vec<f64>,
        theta_steps: usize,
        gap_window_start: Option<f64>,
    ) -> PyResult<HashMap<&'static str, f64>> {
        let var = NeedleVariation { tau, v, theta: theta_steps as f64 * self.sol.grid().h() };
        let rec = pmp::needle_experiment(&self.spec, &self.sol, &var, gap_window_start).map_err(to_py)?;
        Ok(HashMap::from([("sup_dist", rec.sup_dist), ("delta_j", rec.delta_j), ("eta_gap", rec.eta_gap)]))
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution({:?}, N={}, converged={}, objective={:.6e})",
            self.spec.name,
            self.sol.grid().n_steps(),
            self.sol.converged,
            self.sol.objective
        )
    }
}

/// Sampled constants `K`, `M`, `N` of the standing assumptions.
#[pyfunction]
#[pyo3(signature = (problem, n_steps = 256, samples = 2000, seed = 0))]
fn estimate_constants(
    problem: &Problem,
    n_steps: usize,
    samples: usize,
    seed: u64,
) -> PyResult<HashMap<&'static str, f64>> {
    let grid = problem.spec.grid(n_steps).map_err(to_py)?;
    let c = pmp::estimate_constants(&problem.spec, &grid, samples, seed).map_err(to_py)?;
    Ok(HashMap::from([
        ("lipschitz_k", c.lipschitz_k),
        ("bound_m", c.bound_m),
        ("deriv_bound_n", c.deriv_bound_n),
    ]))
}

#[pymodule]
fn pyfracpmp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_function(wrap_pyfunction!(gamma, m)?)?;
    m.add_function(wrap_pyfunction!(mittag_leffler, m)?)?;
    m.add_function(wrap_pyfunction!(frac_integral, m)?)?;
    m.add_function(wrap_pyfunction!(caputo_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_constants, m)?)?;
    m.add_class::<Problem>()?;
    m.add_class::<Solution>()?;
    Ok(())
}
