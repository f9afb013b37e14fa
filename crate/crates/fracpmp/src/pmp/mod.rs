//! Hamiltonian maximization, the forward-backward sweep, and checks of the
//! maximum principle on a computed triple `(x*, u*, lambda)`.

mod extremal;
mod needle;

pub use extremal::{closed_form_comparison, paper_extremal_control, paper_validity_start, ClosedFormComparison};
pub use needle::{
    estimate_constants, estimate_constants_in_box, needle_distance_bound, needle_experiment, ConstantsEstimate, NeedleRecord,
    NeedleVariation,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fde::{solve_adjoint, solve_caputo_ivp, TerminalData};
use crate::fracops::{SampledPath, TimeGrid};
use crate::problem::{ControlSet, ProblemSpec, SolverSettings};

/// `H = L + lambda . f`.
pub fn hamiltonian(problem: &ProblemSpec, t: f64, x: &[f64], u: &[f64], lambda: &[f64]) -> Result<f64> {
    if lambda.len() != problem.state_dim() {
        return Err(Error::dim(format!("lambda has {} components, expected {}", lambda.len(), problem.state_dim())));
    }
    let f = problem.eval_f(t, x, u)?;
    let l = problem.eval_lagrangian(t, x, u)?;
    Ok(l + lambda.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub relaxation: f64,
    pub control_tol: f64,
    pub max_iters: usize,
    pub hamiltonian_grid_points: usize,
    pub refine_iters: usize,
    /// Constant starting control; the box midpoint when absent.
    pub initial_control: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            relaxation: 0.5,
            control_tol: 1e-6,
            max_iters: 500,
            hamiltonian_grid_points: 64,
            refine_iters: 40,
            initial_control: None,
        }
    }
}

impl SweepConfig {
    pub fn from_settings(s: &SolverSettings) -> Self {
        Self { relaxation: s.relaxation, control_tol: s.control_tol, max_iters: s.max_iters, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::invalid(format!("relaxation {} outside (0, 1]", self.relaxation)));
        }
        if !(self.control_tol > 0.0) || self.max_iters == 0 || self.hamiltonian_grid_points < 2 {
            return Err(Error::invalid("control_tol, max_iters and grid points must be positive (grid >= 2)"));
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 })
        .collect()
}

/// Calls `visit` on every point of the tensor grid in lexicographic order.
fn for_each_grid_point(axes: &[Vec<f64>], mut visit: impl FnMut(&[f64]) -> Result<()>) -> Result<()> {
    let m = axes.len();
    let mut idx = vec![0usize; m];
    let mut point: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    loop {
        visit(&point)?;
        let mut d = m;
        loop {
            if d == 0 {
                return Ok(());
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                point[d] = axes[d][idx[d]];
                break;
            }
            idx[d] = 0;
            point[d] = axes[d][0];
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

const REFINE_GAIN_TOL: f64 = 1e-13;

/// Argmax of `H(t, x, ., lambda)` over the box: coarse tensor grid, then
/// coordinate-wise golden-section refinement within one cell of the best grid
/// point. Ties go to the lexicographically smallest point.
pub fn maximize_hamiltonian(
    problem: &ProblemSpec,
    t: f64,
    x: &[f64],
    lambda: &[f64],
    omega: &ControlSet,
    cfg: &SweepConfig,
) -> Result<Vec<f64>> {
    let m = omega.dim();
    if m == 0 {
        return Ok(Vec::new());
    }
    let g = cfg.hamiltonian_grid_points.max(2);
    let axes: Vec<Vec<f64>> = (0..m).map(|j| linspace(omega.lower()[j], omega.upper()[j], g)).collect();
    let h = |u: &[f64]| hamiltonian(problem, t, x, u, lambda);
    let mut best = axes.iter().map(|a| a[0]).collect::<Vec<_>>();
    let mut best_val = f64::NEG_INFINITY;
    for_each_grid_point(&axes, |u| {
        let v = h(u)?;
        if v > best_val {
            best_val = v;
            best.copy_from_slice(u);
        }
        Ok(())
    })?;

    let mut refined = best.clone();
    let mut refined_val = best_val;
    for j in 0..m {
        let (lo, hi) = (omega.lower()[j], omega.upper()[j]);
        let cell = (hi - lo) / (g - 1) as f64;
        if cell == 0.0 {
            continue;
        }
        let mut a = (refined[j] - cell).max(lo);
        let mut b = (refined[j] + cell).min(hi);
        let mut probe = refined.clone();
        let mut eval = |s: f64| {
            probe[j] = s;
            h(&probe)
        };
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = eval(c)?;
        let mut fd = eval(d)?;
        for _ in 0..cfg.refine_iters {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = eval(d)?;
            }
        }
        let (s, v) = if fc >= fd { (c, fc) } else { (d, fd) };
        // Gains at rounding level would pull bang controls off the bound.
        if v > refined_val + REFINE_GAIN_TOL * refined_val.abs().max(1.0) {
            refined[j] = s;
            refined_val = v;
        }
    }
    Ok(if refined_val > best_val { refined } else { best })
}

/// A computed extremal triple.
#[derive(Debug, Clone, PartialEq)]
pub struct PmpSolution {
    pub x_star: SampledPath,
    pub u_star: SampledPath,
    pub lambda: SampledPath,
    pub objective: f64,
    pub max_residual: f64,
    pub sweep_iterations: usize,
    pub converged: bool,
}

impl PmpSolution {
    pub fn grid(&self) -> &TimeGrid {
        self.x_star.grid()
    }
}

/// State trajectory driven by `control`.
pub fn simulate(problem: &ProblemSpec, control: &SampledPath) -> Result<SampledPath> {
    solve_caputo_ivp(problem, control, &problem.x_a, &problem.orders, control.grid())
}

/// Adjoint along `(x, u)` with transversality `d phi/dx (x(b))`.
pub fn adjoint(problem: &ProblemSpec, x: &SampledPath, u: &SampledPath) -> Result<SampledPath> {
    let grid = *x.grid();
    let n = problem.state_dim();
    let mut rows = vec![Vec::with_capacity(grid.len()); n];
    for k in 0..grid.len() {
        for (row, v) in rows.iter_mut().zip(problem.lagrangian_grad_x(grid.t(k), &x.at(k), &u.at(k))?) {
            row.push(v);
        }
    }
    let grad = SampledPath::new(grid, rows)?;
    let terminal = TerminalData { weighted_terminal: problem.terminal_grad(&x.at(grid.n_steps()))? };
    solve_adjoint(problem, &grad, x, u, &terminal, &problem.orders, &grid)
}

/// `phi(b, x(b)) + int_a^b L` with the composite trapezoid rule.
pub fn objective(problem: &ProblemSpec, x: &SampledPath, u: &SampledPath) -> Result<f64> {
    let grid = x.grid();
    let n = grid.n_steps();
    let mut integral = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        integral += w * problem.eval_lagrangian(grid.t(k), &x.at(k), &u.at(k))?;
    }
    Ok(problem.eval_terminal(&x.at(n))? + grid.h() * integral)
}

fn constant_control(grid: TimeGrid, u: &[f64]) -> Result<SampledPath> {
    SampledPath::new(grid, u.iter().map(|v| vec![*v; grid.len()]).collect())
}

/// Pointwise argmax along the trajectory, keeping the current control wherever
/// it already attains the maximum.
fn argmax_control(
    problem: &ProblemSpec,
    x: &SampledPath,
    u: &SampledPath,
    lambda: &SampledPath,
    cfg: &SweepConfig,
) -> Result<SampledPath> {
    let grid = *x.grid();
    let per_node: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let t = grid.t(k);
            let (xk, uk, lk) = (x.at(k), u.at(k), lambda.at(k));
            let target = maximize_hamiltonian(problem, t, &xk, &lk, &problem.omega, cfg)?;
            let h = |u: &[f64]| hamiltonian(problem, t, &xk, u, &lk);
            let best = h(&target)?;
            let tol = REFINE_GAIN_TOL * best.abs().max(1.0);
            // Keep the current control only where H is flat across the box.
            let flat = best - h(problem.omega.lower())? <= tol && best - h(problem.omega.upper())? <= tol;
            if flat && h(&uk)? >= best - tol {
                Ok(uk)
            } else {
                Ok(target)
            }
        })
        .collect::<Result<_>>()?;
    let m = problem.control_dim();
    SampledPath::new(grid, (0..m).map(|j| per_node.iter().map(|u| u[j]).collect()).collect())
}

struct Iterate {
    x: SampledPath,
    u: SampledPath,
    lambda: SampledPath,
    objective: f64,
}

/// Forward-backward sweep: simulate, solve the adjoint, maximize `H`
/// pointwise, relax. After convergence one unrelaxed step is taken so that
/// `u*` is the exact pointwise argmax for the reported `lambda`. Without
/// convergence the iterate with the largest objective is returned.
pub fn forward_backward_sweep(problem: &ProblemSpec, grid: &TimeGrid, cfg: &SweepConfig) -> Result<PmpSolution> {
    problem.validate()?;
    cfg.validate()?;
    if grid.a() != problem.a || grid.b() != problem.b {
        return Err(Error::invalid("grid does not span the problem horizon"));
    }
    let mut u0 = cfg.initial_control.clone().unwrap_or_else(|| problem.omega.midpoint());
    if u0.len() != problem.control_dim() {
        return Err(Error::dim(format!("initial control has {} entries", u0.len())));
    }
    problem.omega.clamp(&mut u0);
    let mut u = constant_control(*grid, &u0)?;
    let omega = cfg.relaxation;
    let mut best: Option<Iterate> = None;
    for iteration in 1..=cfg.max_iters {
        let x = simulate(problem, &u)?;
        let lambda = adjoint(problem, &x, &u)?;
        let target = argmax_control(problem, &x, &u, &lambda, cfg)?;
        let mut change: f64 = 0.0;
        let next: Vec<Vec<f64>> = u
            .components()
            .iter()
            .zip(target.components())
            .map(|(cur, tgt)| {
                cur.iter()
                    .zip(tgt)
                    .map(|(c, g)| {
                        change = change.max(omega * (g - c).abs());
                        (1.0 - omega) * c + omega * g
                    })
                    .collect()
            })
            .collect();
        if change < cfg.control_tol {
            return finish(problem, target, iteration, true, cfg);
        }
        let obj = objective(problem, &x, &u)?;
        if best.as_ref().is_none_or(|b| obj > b.objective) {
            best = Some(Iterate { x, u: u.clone(), lambda, objective: obj });
        }
        u = SampledPath::new(*grid, next)?;
    }
    let b = best.expect("at least one iteration");
    let mut sol = PmpSolution {
        x_star: b.x,
        u_star: b.u,
        lambda: b.lambda,
        objective: b.objective,
        max_residual: 0.0,
        sweep_iterations: cfg.max_iters,
        converged: false,
    };
    sol.max_residual = pmp_residual(problem, &sol, cfg.hamiltonian_grid_points)?;
    Ok(sol)
}

fn finish(
    problem: &ProblemSpec,
    u: SampledPath,
    iterations: usize,
    converged: bool,
    cfg: &SweepConfig,
) -> Result<PmpSolution> {
    let x = simulate(problem, &u)?;
    let lambda = adjoint(problem, &x, &u)?;
    let obj = objective(problem, &x, &u)?;
    let mut sol = PmpSolution {
        x_star: x,
        u_star: u,
        lambda,
        objective: obj,
        max_residual: 0.0,
        sweep_iterations: iterations,
        converged,
    };
    sol.max_residual = pmp_residual(problem, &sol, cfg.hamiltonian_grid_points)?;
    Ok(sol)
}

/// Nodes where some control component jumps by more than 10% of the box width.
pub fn switch_nodes(u: &SampledPath, omega: &ControlSet) -> Vec<bool> {
    let len = u.grid().len();
    let threshold = 0.1 * omega.max_width();
    let mut out = vec![false; len];
    if threshold == 0.0 {
        return out;
    }
    for row in u.components() {
        for k in 1..len {
            if (row[k] - row[k - 1]).abs() > threshold {
                out[k] = true;
                out[k - 1] = true;
            }
        }
    }
    out
}

/// `max [H(t, x*, w, lambda) - H(t, x*, u*, lambda)]_+` over unflagged,
/// non-switch nodes and a probe grid of `probe_points_per_dim` points per
/// control dimension (endpoints included; one point means `u*` itself).
pub fn pmp_residual(problem: &ProblemSpec, sol: &PmpSolution, probe_points_per_dim: usize) -> Result<f64> {
    let grid = *sol.grid();
    let switches = switch_nodes(&sol.u_star, &problem.omega);
    let omega = &problem.omega;
    let per_node: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            if sol.lambda.is_flagged(k) || sol.x_star.is_flagged(k) || switches[k] {
                return Ok(0.0);
            }
            let t = grid.t(k);
            let (x, u, l) = (sol.x_star.at(k), sol.u_star.at(k), sol.lambda.at(k));
            if probe_points_per_dim <= 1 {
                return Ok(0.0);
            }
            let base = hamiltonian(problem, t, &x, &u, &l)?;
            let axes: Vec<Vec<f64>> = (0..omega.dim())
                .map(|j| linspace(omega.lower()[j], omega.upper()[j], probe_points_per_dim))
                .collect();
            let mut worst: f64 = 0.0;
            for_each_grid_point(&axes, |w| {
                worst = worst.max(hamiltonian(problem, t, &x, w, &l)? - base);
                Ok(())
            })?;
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    Ok(per_node.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin;
    use crate::problem::expr::parse_expression;

    #[test]
    fn hamiltonian_by_hand() {
        let p = builtin("paper_example").unwrap();
        assert_eq!(hamiltonian(&p, 1.0, &[1.0, 1.0], &[0.0], &[2.0, 1.0]).unwrap(), 3.0);
        assert_eq!(
            hamiltonian(&p, 1.0, &[1.0, 1.0], &[0.4], &[0.0, 0.0]).unwrap(),
            p.eval_lagrangian(1.0, &[1.0, 1.0], &[0.4]).unwrap()
        );
    }

    #[test]
    fn maximizer_cases() {
        let mut p = builtin("lq_smoke").unwrap();
        let cfg = SweepConfig::default();
        let u = maximize_hamiltonian(&p, 0.5, &[0.0], &[3.1], &p.omega, &cfg).unwrap();
        assert!((u[0] - 1.55).abs() < 1e-6, "{u:?}");
        p.lagrangian = parse_expression("u1", 1, 1).unwrap();
        let u = maximize_hamiltonian(&p, 0.5, &[0.0], &[0.0], &p.omega, &cfg).unwrap();
        assert_eq!(u, vec![10.0]);
        let example = builtin("paper_example").unwrap();
        let u = maximize_hamiltonian(&example, 2.0, &[1.0, 1.0], &[1.3, 0.5], &example.omega, &cfg).unwrap();
        assert_eq!(u, vec![-2.0]);
    }

    #[test]
    fn flat_hamiltonian_picks_smallest() {
        let p = builtin("zero_control").unwrap();
        let u = maximize_hamiltonian(&p, 0.5, &[1.0], &[1.0], &p.omega, &SweepConfig::default()).unwrap();
        assert_eq!(u, vec![-1.0]);
    }

    #[test]
    fn zero_control_converges_immediately() {
        let p = builtin("zero_control").unwrap();
        let g = p.grid(64).unwrap();
        let sol = forward_backward_sweep(&p, &g, &SweepConfig::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.sweep_iterations, 1);
        assert!(sol.u_star.component(0).iter().all(|u| *u == 0.0));
        let again = objective(&p, &simulate(&p, &sol.u_star).unwrap(), &sol.u_star).unwrap();
        assert_eq!(again, sol.objective);
    }

    #[test]
    fn lq_smoke_sweep() {
        let p = builtin("lq_smoke").unwrap();
        let g = p.grid(128).unwrap();
        let sol = forward_backward_sweep(&p, &g, &SweepConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.max_residual <= 1e-3, "{}", sol.max_residual);
        assert_eq!(pmp_residual(&p, &sol, 1).unwrap(), 0.0);
        for k in 0..128 {
            let lam = (1.0 - g.t(k)).powf(-0.3) / crate::specfun::gamma_unchecked(0.7);
            assert!((sol.u_star.value(0, k) - lam / 2.0).abs() < 1e-2, "k={k}");
        }
    }
}
