//! Forward Caputo initial-value solver, the linear variational equation for a
//! needle perturbation, and the backward adjoint equation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fracops::{
    kernel_integral, strip_singularity, trapezoid_integral, weights, MultiOrder, SampledPath, Side, Singularity,
    TimeGrid,
};
use crate::specfun::gamma_unchecked as gamma;

/// Fixpoint tolerance (sup-norm) for the adjoint and variational iterations.
pub const FIXPOINT_TOL: f64 = 1e-10;
pub const FIXPOINT_MAX_ITERS: usize = 200;
const DAMPING: f64 = 0.8;

/// Right-hand side `f(t, x, u)` of the state equation.
pub trait VectorField: Sync {
    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;

    /// `J[(i, j)] = d f_i / d x_j`; central differences with step `1e-6 (1 + |x_j|)` by default.
    fn jacobian_x(&self, t: f64, x: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.state_dim();
        let mut jac = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let step = 1e-6 * (1.0 + x[j].abs());
            xp[j] = x[j] + step;
            let fp = self.eval(t, &xp, u)?;
            xp[j] = x[j] - step;
            let fm = self.eval(t, &xp, u)?;
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        Ok(jac)
    }
}

/// A [`VectorField`] backed by a closure.
pub struct FnField<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, &[f64], &[f64]) -> Vec<f64> + Sync,
{
    pub fn new(n: usize, m: usize, f: F) -> Self {
        Self { n, m, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &[f64], &[f64]) -> Vec<f64> + Sync,
{
    fn state_dim(&self) -> usize {
        self.n
    }

    fn control_dim(&self) -> usize {
        self.m
    }

    fn eval(&self, t: f64, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(t, x, u))
    }
}

fn check_control(field: &dyn VectorField, control: &SampledPath, grid: &TimeGrid) -> Result<()> {
    if control.grid() != grid {
        return Err(Error::dim("control is sampled on a different grid"));
    }
    if control.dim() != field.control_dim() {
        return Err(Error::dim(format!(
            "control has {} components, field expects {}",
            control.dim(),
            field.control_dim()
        )));
    }
    Ok(())
}

fn eval_checked(field: &dyn VectorField, t: f64, x: &[f64], u: &[f64], step: usize) -> Result<Vec<f64>> {
    let v = field.eval(t, x, u)?;
    if v.len() != x.len() {
        return Err(Error::dim(format!("field returned {} values for {} states", v.len(), x.len())));
    }
    if v.iter().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    Ok(v)
}

/// Solves `cD^{alpha_i}_{a+} x_i = f_i(t, x, u)`, `x(a) = x0`, by the fractional
/// Adams predictor-corrector (one corrector pass per step).
pub fn solve_caputo_ivp(
    field: &dyn VectorField,
    control: &SampledPath,
    x0: &[f64],
    orders: &MultiOrder,
    grid: &TimeGrid,
) -> Result<SampledPath> {
    let n = orders.len();
    if x0.len() != n || field.state_dim() != n {
        return Err(Error::dim(format!(
            "{} orders, {} initial values, field of dimension {}",
            n,
            x0.len(),
            field.state_dim()
        )));
    }
    check_control(field, control, grid)?;
    let len = grid.len();
    let h = grid.h();
    let trap: Vec<_> = orders.as_slice().iter().map(|&a| weights::trapezoid(a, len)).collect();
    let rect: Vec<_> = orders.as_slice().iter().map(|&a| weights::rectangle(a, len)).collect();
    let trap_scale: Vec<f64> = orders.as_slice().iter().map(|&a| h.powf(a) / gamma(a + 2.0)).collect();
    let rect_scale: Vec<f64> = orders.as_slice().iter().map(|&a| h.powf(a) / gamma(a + 1.0)).collect();

    let mut x = vec![vec![0.0; len]; n];
    let mut f = vec![vec![0.0; len]; n];
    let f0 = eval_checked(field, grid.t(0), x0, &control.at(0), 0)?;
    for i in 0..n {
        x[i][0] = x0[i];
        f[i][0] = f0[i];
    }
    let mut xp = vec![0.0; n];
    let mut xc = vec![0.0; n];
    for k in 1..len {
        for i in 0..n {
            let b = &rect[i];
            let mut s = 0.0;
            for j in 0..k {
                s += b[k - 1 - j] * f[i][j];
            }
            xp[i] = x0[i] + rect_scale[i] * s;
        }
        let u = control.at(k);
        let fp = eval_checked(field, grid.t(k), &xp, &u, k)?;
        for i in 0..n {
            let c = &trap[i];
            let mut s = weights::trapezoid_start(orders.get(i), k) * f[i][0] + c[0] * fp[i];
            for j in 1..k {
                s += c[k - j] * f[i][j];
            }
            xc[i] = x0[i] + trap_scale[i] * s;
        }
        let fc = eval_checked(field, grid.t(k), &xc, &u, k)?;
        for i in 0..n {
            x[i][k] = xc[i];
            f[i][k] = fc[i];
        }
    }
    SampledPath::new(*grid, x).map_err(|_| Error::NonFinite { step: len - 1 })
}

/// Weighted initial value of the variational trajectory at `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalInit {
    pub tau: f64,
    pub jump: Vec<f64>,
}

/// Terminal value of `I^{1-alpha}_{b-} lambda` at `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalData {
    pub weighted_terminal: Vec<f64>,
}

/// `y_i = w_i s^(kappa_i - 1)/Gamma(kappa_i) + rho_i` with
/// `y_i = w_i K_i + I^{order_i}[source_i + sum_j coupling[i][j] y_j]`, on a
/// left-sided local grid.
struct KernelSystem<'a> {
    h: f64,
    len: usize,
    orders: &'a [f64],
    kernel_orders: Vec<f64>,
    weights: &'a [f64],
    coupling: Vec<Vec<Vec<f64>>>,
    source: Vec<Vec<f64>>,
}

struct KernelSolution {
    values: Vec<Vec<f64>>,
    singular: Vec<Option<f64>>,
    flagged_origin: bool,
}

fn min_exponent(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl KernelSystem<'_> {
    fn dim(&self) -> usize {
        self.orders.len()
    }

    fn active(&self, i: usize, j: usize) -> bool {
        self.coupling[i][j].iter().any(|c| *c != 0.0)
    }

    /// `sum_j w_j I^{order_i}[coupling[i][j] K_j]`, integrated exactly against the kernel.
    fn kernel_source(&self) -> (Vec<Vec<f64>>, Vec<Option<f64>>) {
        let n = self.dim();
        let mut rows = vec![vec![0.0; self.len]; n];
        let mut exps = vec![None; n];
        for i in 0..n {
            for j in 0..n {
                if self.weights[j] == 0.0 || !self.active(i, j) {
                    continue;
                }
                let g = gamma(self.kernel_orders[j]);
                let mu: Vec<f64> = self.coupling[i][j].iter().map(|c| c / g).collect();
                let (vals, e) = kernel_integral(&mu, self.orders[i], self.kernel_orders[j] - 1.0, self.h);
                for (r, v) in rows[i].iter_mut().zip(vals) {
                    *r += self.weights[j] * v;
                }
                exps[i] = min_exponent(exps[i], e);
            }
        }
        (rows, exps)
    }

    /// Singular exponents of `rho`, propagated through the coupling.
    fn rho_exponents(&self, mut exps: Vec<Option<f64>>) -> Vec<Option<f64>> {
        let n = self.dim();
        for _ in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if let (true, Some(e)) = (self.active(i, j), exps[j]) {
                        let cand = self.orders[i] + e;
                        if cand < -1e-12 {
                            exps[i] = min_exponent(exps[i], Some(cand));
                        }
                    }
                }
            }
        }
        exps
    }

    fn integrand_exponent(&self, i: usize, exps: &[Option<f64>]) -> Option<f64> {
        (0..self.dim())
            .filter(|&j| self.active(i, j))
            .fold(None, |acc, j| min_exponent(acc, exps[j]))
    }

    fn solve(&self) -> Result<KernelSolution> {
        let n = self.dim();
        let (s_rows, s_exps) = self.kernel_source();
        let exps = self.rho_exponents(s_exps);
        let q_exps: Vec<Option<f64>> = (0..n).map(|i| self.integrand_exponent(i, &exps)).collect();
        let mut rho = s_rows.clone();
        let mut prev_step: Option<Vec<Vec<f64>>> = None;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let mut next = Vec::with_capacity(n);
            for i in 0..n {
                let q: Vec<f64> = (0..self.len)
                    .map(|k| {
                        self.source[i][k] + (0..n).map(|j| self.coupling[i][j][k] * rho[j][k]).sum::<f64>()
                    })
                    .collect();
                let integral = match q_exps[i] {
                    Some(g) => kernel_integral(&strip_singularity(&q, g, self.h), self.orders[i], g, self.h).0,
                    None => trapezoid_integral(&q, self.orders[i], self.h),
                };
                let row: Vec<f64> = s_rows[i].iter().zip(integral).map(|(s, v)| s + v).collect();
                next.push(row);
            }
            let step: Vec<Vec<f64>> = next
                .iter()
                .zip(&rho)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect();
            let mut change: f64 = 0.0;
            for (i, row) in step.iter().enumerate() {
                let from = usize::from(exps[i].is_some());
                for (k, d) in row.iter().enumerate().skip(from) {
                    if !d.is_finite() {
                        return Err(Error::NonFinite { step: k });
                    }
                    change = change.max(d.abs());
                }
            }
            let oscillating = prev_step.as_ref().is_some_and(|p| {
                let dot: f64 = p.iter().flatten().zip(step.iter().flatten()).map(|(a, b)| a * b).sum();
                dot < 0.0
            });
            if oscillating {
                for (r, d) in rho.iter_mut().zip(&step) {
                    for (x, dx) in r.iter_mut().zip(d) {
                        *x += DAMPING * dx;
                    }
                }
            } else {
                rho = next;
            }
            if change <= FIXPOINT_TOL {
                break;
            }
            if iterations >= FIXPOINT_MAX_ITERS {
                return Err(Error::NoConvergence { iterations, change });
            }
            prev_step = Some(step);
        }

        let mut values = rho;
        let mut singular = Vec::with_capacity(n);
        for i in 0..n {
            let kappa = self.kernel_orders[i];
            let w = self.weights[i];
            if w != 0.0 {
                let g = gamma(kappa);
                for (k, v) in values[i].iter_mut().enumerate().skip(1) {
                    *v += w * (k as f64 * self.h).powf(kappa - 1.0) / g;
                }
            }
            let kernel_exp = (w != 0.0).then_some(kappa - 1.0);
            singular.push(min_exponent(kernel_exp, exps[i]));
        }
        let flagged_origin = singular.iter().any(Option::is_some);
        for (row, s) in values.iter_mut().zip(&singular) {
            if s.is_some() {
                row[0] = row[1];
            }
        }
        Ok(KernelSolution { values, singular, flagged_origin })
    }
}

fn jacobians(
    field: &dyn VectorField,
    x: &SampledPath,
    u: &SampledPath,
    nodes: impl Iterator<Item = usize>,
) -> Result<Vec<DMatrix<f64>>> {
    let grid = x.grid();
    nodes
        .map(|k| {
            let j = field.jacobian_x(grid.t(k), &x.at(k), &u.at(k))?;
            if j.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: k });
            }
            Ok(j)
        })
        .collect()
}

fn check_trajectory(field: &dyn VectorField, x: &SampledPath, u: &SampledPath, orders: &MultiOrder, grid: &TimeGrid) -> Result<()> {
    if x.grid() != grid {
        return Err(Error::dim("state trajectory is sampled on a different grid"));
    }
    if x.dim() != orders.len() || field.state_dim() != orders.len() {
        return Err(Error::dim(format!(
            "{} orders, {} state components, field of dimension {}",
            orders.len(),
            x.dim(),
            field.state_dim()
        )));
    }
    check_control(field, u, grid)
}

/// Linear variational trajectory `cD^{alpha} eta = (df/dx) eta` on `[tau, b]`
/// whose weighted initial value at `tau` is `jump`, realized as the kernel term
/// `jump (t - tau)^(abar - 1)/Gamma(abar)` with `abar = min alpha_i`. Zero before
/// `tau`; the node `tau` is flagged when `jump != 0`.
pub fn solve_variational(
    field: &dyn VectorField,
    x_star: &SampledPath,
    u_star: &SampledPath,
    init: &VariationalInit,
    orders: &MultiOrder,
    grid: &TimeGrid,
) -> Result<SampledPath> {
    check_trajectory(field, x_star, u_star, orders, grid)?;
    let n = orders.len();
    if init.jump.len() != n {
        return Err(Error::dim(format!("jump has {} components, expected {n}", init.jump.len())));
    }
    if !(init.tau >= grid.a() && init.tau < grid.b()) {
        return Err(Error::domain(format!("tau = {} outside [{}, {})", init.tau, grid.a(), grid.b())));
    }
    let k0 = grid.nearest_node(init.tau);
    if grid.n_steps() - k0 < 2 {
        return Err(Error::domain(format!("tau = {} leaves fewer than two steps before b", init.tau)));
    }
    let len = grid.len() - k0;
    let jac = jacobians(field, x_star, u_star, k0..grid.len())?;
    let abar = orders.min();
    let sys = KernelSystem {
        h: grid.h(),
        len,
        orders: orders.as_slice(),
        kernel_orders: vec![abar; n],
        weights: &init.jump,
        coupling: (0..n)
            .map(|i| (0..n).map(|j| jac.iter().map(|m| m[(i, j)]).collect()).collect())
            .collect(),
        source: vec![vec![0.0; len]; n],
    };
    let sol = sys.solve()?;
    let mut values = vec![vec![0.0; grid.len()]; n];
    for (full, local) in values.iter_mut().zip(&sol.values) {
        full[k0..].copy_from_slice(local);
    }
    let mut flags = vec![false; grid.len()];
    flags[k0] = sol.flagged_origin;
    let singular = if k0 == 0 {
        sol.singular
            .iter()
            .map(|e| e.map(|exponent| Singularity { side: Side::Left, exponent }))
            .collect()
    } else {
        vec![None; n]
    };
    Ok(crate::fracops::SampledPath::from_parts(*grid, values, flags, singular))
}

/// Adjoint `D^{alpha}_{b-} lambda = dL/dx + lambda . df/dx` with
/// `I^{1-alpha}_{b-} lambda (b) = terminal`, solved in the Volterra form
/// `lambda_i = w_i (b-t)^(alpha_i-1)/Gamma(alpha_i) + I^{alpha_i}_{b-}[dH/dx]_i`.
/// Node `b` is flagged when any component blows up there; such components are
/// annotated with their exponent.
pub fn solve_adjoint(
    field: &dyn VectorField,
    lagrangian_grad_x: &SampledPath,
    x_star: &SampledPath,
    u_star: &SampledPath,
    terminal: &TerminalData,
    orders: &MultiOrder,
    grid: &TimeGrid,
) -> Result<SampledPath> {
    check_trajectory(field, x_star, u_star, orders, grid)?;
    let n = orders.len();
    if lagrangian_grad_x.grid() != grid || lagrangian_grad_x.dim() != n {
        return Err(Error::dim("Lagrangian gradient does not match the state trajectory"));
    }
    if terminal.weighted_terminal.len() != n {
        return Err(Error::dim(format!(
            "terminal data has {} components, expected {n}",
            terminal.weighted_terminal.len()
        )));
    }
    if terminal.weighted_terminal.iter().any(|w| !w.is_finite()) {
        return Err(Error::domain("terminal data is not finite"));
    }
    let len = grid.len();
    let jac = jacobians(field, x_star, u_star, (0..len).rev())?;
    let sys = KernelSystem {
        h: grid.h(),
        len,
        orders: orders.as_slice(),
        kernel_orders: orders.as_slice().to_vec(),
        weights: &terminal.weighted_terminal,
        coupling: (0..n)
            .map(|i| (0..n).map(|j| jac.iter().map(|m| m[(j, i)]).collect()).collect())
            .collect(),
        source: (0..n)
            .map(|i| lagrangian_grad_x.component(i).iter().rev().copied().collect())
            .collect(),
    };
    let sol = sys.solve()?;
    let mut flags = vec![false; len];
    flags[0] = sol.flagged_origin;
    let singular = sol
        .singular
        .iter()
        .map(|e| e.map(|exponent| Singularity { side: Side::Left, exponent }))
        .collect();
    Ok(SampledPath::from_parts(*grid, sol.values, flags, singular).reflected())
}

/// Estimates `I^{1-alpha_i}_{b-} lambda_i (b)` from the blow-up rate at `b`:
/// `c(d) = Gamma(alpha_i) d^(1-alpha_i) lambda_i(b-d)` at `d = h, 2h, 4h`,
/// extrapolated to `d -> 0` under a power-law correction.
pub fn transversality_readout(lambda: &SampledPath, orders: &MultiOrder) -> Result<Vec<f64>> {
    let grid = lambda.grid();
    if lambda.dim() != orders.len() {
        return Err(Error::dim(format!("{} orders for {} components", orders.len(), lambda.dim())));
    }
    let n = grid.n_steps();
    if n < 4 {
        return Err(Error::invalid("transversality readout needs at least 4 steps"));
    }
    let h = grid.h();
    Ok(orders
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let c = |m: usize| gamma(a) * (m as f64 * h).powf(1.0 - a) * lambda.value(i, n - m);
            let (c1, c2, c4) = (c(1), c(2), c(4));
            let d1 = c2 - c1;
            let d2 = c4 - c2;
            if d2.abs() <= 1e-14 * (1.0 + c1.abs()) {
                return c1;
            }
            let r = d1 / d2;
            if r > 0.0 && r < 1.0 {
                c1 - d1 * r / (1.0 - r)
            } else {
                c1
            }
        })
        .collect())
}
