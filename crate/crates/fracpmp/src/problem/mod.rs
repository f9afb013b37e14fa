//! Problem data: orders, horizon, initial state, control box, and the
//! expressions for `f`, `L` and `phi`.

mod config;
pub mod expr;

pub use config::{load_problem, parse_problem};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fde::VectorField;
use crate::fracops::{MultiOrder, TimeGrid};
use expr::{parse_expression, Expr};

/// Closed box `lower <= u <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim(format!(
                "control bounds have {} lower and {} upper entries",
                lower.len(),
                upper.len()
            )));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::domain(format!("control bound {} is [{l}, {u}]", j + 1)));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim() && u.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), h)| l <= v && v <= h)
    }

    pub fn clamp(&self, u: &mut [f64]) {
        for ((v, l), h) in u.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *h);
        }
    }

    /// Largest side length.
    pub fn max_width(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).fold(0.0, f64::max)
    }
}

/// Sweep settings carried by a problem file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub n_steps: usize,
    pub relaxation: f64,
    pub control_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { n_steps: 512, relaxation: 0.5, control_tol: 1e-6, max_iters: 500 }
    }
}

/// Optional analytic `df/dx` (row `i`, column `j`) and `dL/dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub f_x: Vec<Vec<Expr>>,
    pub lagrangian_x: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub orders: MultiOrder,
    pub a: f64,
    pub b: f64,
    pub x_a: Vec<f64>,
    pub omega: ControlSet,
    pub f: Vec<Expr>,
    pub lagrangian: Expr,
    /// `phi(b, x(b))`; `t` evaluates to `b`.
    pub terminal: Expr,
    pub gradients: Option<Gradients>,
    pub solver: SolverSettings,
}

impl ProblemSpec {
    /// Checks dimensions, horizon and expression arities.
    pub fn validate(&self) -> Result<()> {
        let n = self.orders.len();
        let m = self.omega.dim();
        if !(self.a.is_finite() && self.b.is_finite() && self.b > self.a) {
            return Err(Error::invalid(format!("horizon [{}, {}] is empty or non-finite", self.a, self.b)));
        }
        if self.x_a.len() != n || self.f.len() != n {
            return Err(Error::dim(format!(
                "{n} orders, {} initial values, {} dynamics expressions",
                self.x_a.len(),
                self.f.len()
            )));
        }
        if self.x_a.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("initial state is not finite"));
        }
        let mut exprs: Vec<&Expr> = self.f.iter().chain([&self.lagrangian, &self.terminal]).collect();
        if let Some(g) = &self.gradients {
            if g.f_x.len() != n || g.f_x.iter().any(|r| r.len() != n) || g.lagrangian_x.len() != n {
                return Err(Error::dim("analytic gradients must be n x n for f and n for L"));
            }
            exprs.extend(g.f_x.iter().flatten());
            exprs.extend(&g.lagrangian_x);
        }
        for e in exprs {
            if e.state_arity() > n || e.control_arity() > m {
                return Err(Error::dim(format!("`{e}` uses variables beyond n = {n}, m = {m}")));
            }
        }
        if self.terminal.control_arity() > 0 {
            return Err(Error::invalid("the terminal cost may not depend on the control"));
        }
        if self.solver.n_steps < 4 {
            return Err(Error::invalid("n_steps must be at least 4"));
        }
        if !(self.solver.relaxation > 0.0 && self.solver.relaxation <= 1.0) {
            return Err(Error::invalid("relaxation must lie in (0, 1]"));
        }
        if !(self.solver.control_tol > 0.0) || self.solver.max_iters == 0 {
            return Err(Error::invalid("control_tol and max_iters must be positive"));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.orders.len()
    }

    pub fn control_dim(&self) -> usize {
        self.omega.dim()
    }

    pub fn grid(&self, n_steps: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.a, self.b, n_steps)
    }

    pub fn eval_f(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.f.iter().map(|e| Ok(e.eval(t, x, u)?)).collect()
    }

    pub fn eval_lagrangian(&self, t: f64, x: &[f64], u: &[f64]) -> Result<f64> {
        Ok(self.lagrangian.eval(t, x, u)?)
    }

    pub fn eval_terminal(&self, x_b: &[f64]) -> Result<f64> {
        Ok(self.terminal.eval(self.b, x_b, &[])?)
    }

    pub fn lagrangian_grad_x(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if let Some(g) = &self.gradients {
            return g.lagrangian_x.iter().map(|e| Ok(e.eval(t, x, u)?)).collect();
        }
        central_gradient(x, |y| self.eval_lagrangian(t, y, u))
    }

    /// `d phi / dx` at the terminal state, by central differences.
    pub fn terminal_grad(&self, x_b: &[f64]) -> Result<Vec<f64>> {
        central_gradient(x_b, |y| self.eval_terminal(y))
    }

    /// Serializes to the problem-file format.
    pub fn to_toml(&self) -> String {
        config::to_toml(self)
    }
}

fn central_gradient(x: &[f64], mut g: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let step = 1e-6 * (1.0 + x[j].abs());
        y[j] = x[j] + step;
        let p = g(&y)?;
        y[j] = x[j] - step;
        let m = g(&y)?;
        y[j] = x[j];
        out.push((p - m) / (2.0 * step));
    }
    Ok(out)
}

impl VectorField for ProblemSpec {
    fn state_dim(&self) -> usize {
        self.orders.len()
    }

    fn control_dim(&self) -> usize {
        self.omega.dim()
    }

    fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.eval_f(t, x, u)
    }

    fn jacobian_x(&self, t: f64, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.orders.len();
        match &self.gradients {
            Some(g) => {
                let mut jac = DMatrix::zeros(n, n);
                for (i, row) in g.f_x.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        jac[(i, j)] = e.eval(t, x, u)?;
                    }
                }
                Ok(jac)
            }
            None => {
                let mut jac = DMatrix::zeros(n, n);
                for i in 0..n {
                    let grad = central_gradient(x, |y| Ok(self.f[i].eval(t, y, u)?))?;
                    for (j, v) in grad.into_iter().enumerate() {
                        jac[(i, j)] = v;
                    }
                }
                Ok(jac)
            }
        }
    }
}

fn parse_all(src: &[&str], n: usize, m: usize) -> Vec<Expr> {
    src.iter().map(|s| parse_expression(s, n, m).expect("built-in expression")).collect()
}

fn builtin_paper_example() -> ProblemSpec {
    ProblemSpec {
        name: "paper_example".into(),
        orders: MultiOrder::new(vec![1.0 / 3.0, 0.5]).unwrap(),
        a: 1.0,
        b: 5.0,
        x_a: vec![1.0, 1.0],
        omega: ControlSet::new(vec![-2.0], vec![7.0]).unwrap(),
        f: parse_all(&["1 - exp(2*u1)", "x1"], 2, 1),
        lagrangian: parse_all(&["1 + exp(2*u1)"], 2, 1).remove(0),
        terminal: parse_all(&["x2"], 2, 0).remove(0),
        gradients: Some(Gradients {
            f_x: vec![parse_all(&["0", "0"], 2, 1), parse_all(&["1", "0"], 2, 1)],
            lagrangian_x: parse_all(&["0", "0"], 2, 1),
        }),
        solver: SolverSettings::default(),
    }
}

fn builtin_lq_smoke() -> ProblemSpec {
    ProblemSpec {
        name: "lq_smoke".into(),
        orders: MultiOrder::new(vec![0.7]).unwrap(),
        a: 0.0,
        b: 1.0,
        x_a: vec![0.0],
        omega: ControlSet::new(vec![-10.0], vec![10.0]).unwrap(),
        f: parse_all(&["u1"], 1, 1),
        lagrangian: parse_all(&["-(u1^2)"], 1, 1).remove(0),
        terminal: parse_all(&["x1"], 1, 0).remove(0),
        gradients: Some(Gradients { f_x: vec![parse_all(&["0"], 1, 1)], lagrangian_x: parse_all(&["0"], 1, 1) }),
        solver: SolverSettings::default(),
    }
}

fn builtin_zero_control() -> ProblemSpec {
    ProblemSpec {
        name: "zero_control".into(),
        orders: MultiOrder::new(vec![0.5]).unwrap(),
        a: 0.0,
        b: 1.0,
        x_a: vec![1.0],
        omega: ControlSet::new(vec![-1.0], vec![1.0]).unwrap(),
        f: parse_all(&["-x1"], 1, 1),
        lagrangian: parse_all(&["x1^2"], 1, 1).remove(0),
        terminal: parse_all(&["x1"], 1, 0).remove(0),
        gradients: None,
        solver: SolverSettings::default(),
    }
}

/// Every built-in problem.
pub fn builtin_problems() -> Vec<ProblemSpec> {
    vec![builtin_paper_example(), builtin_lq_smoke(), builtin_zero_control()]
}

pub fn builtin(name: &str) -> Result<ProblemSpec> {
    builtin_problems()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::NotFound(name.to_string()))
}
