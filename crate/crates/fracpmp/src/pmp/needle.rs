//! Needle-like control variations and the constants that bound their effect.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{objective, simulate, PmpSolution};
use crate::error::{Error, Result};
use crate::fde::{solve_variational, VariationalInit, VectorField};
use crate::fracops::{SampledPath, TimeGrid};
use crate::problem::ProblemSpec;
use crate::specfun::{gamma_fn, mittag_leffler, MittagLefflerParams};

/// `u = v` on `[t_tau, t_tau + theta)`, unchanged elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeedleVariation {
    pub tau: usize,
    pub v: Vec<f64>,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeedleRecord {
    /// `||x^theta - x*||_inf`.
    pub sup_dist: f64,
    /// `(J(u^theta) - J(u*)) / theta`.
    pub delta_j: f64,
    /// `sup ||(x^theta - x*)/theta - eta||` over the comparison window.
    pub eta_gap: f64,
}

impl NeedleVariation {
    /// Number of grid cells covered by the needle.
    fn cells(&self, problem: &ProblemSpec, grid: &TimeGrid) -> Result<usize> {
        if !problem.omega.contains(&self.v) {
            return Err(Error::domain(format!("needle value {:?} is outside the control set", self.v)));
        }
        if !(self.theta > 0.0) {
            return Err(Error::domain(format!("needle width {} must be positive", self.theta)));
        }
        let p = self.theta / grid.h();
        let cells = p.round();
        if (p - cells).abs() > 1e-9 * p.max(1.0) || cells < 1.0 {
            return Err(Error::domain(format!("needle width {} is not a multiple of h = {}", self.theta, grid.h())));
        }
        let cells = cells as usize;
        if self.tau + cells > grid.n_steps() {
            return Err(Error::domain("needle extends past b"));
        }
        Ok(cells)
    }
}

/// Applies the needle, simulates, and compares against the variational
/// trajectory. `eta_gap` is measured on `[gap_window_start, b]`, defaulting to
/// `[t_tau + theta, b]`.
pub fn needle_experiment(
    problem: &ProblemSpec,
    sol: &PmpSolution,
    var: &NeedleVariation,
    gap_window_start: Option<f64>,
) -> Result<NeedleRecord> {
    let grid = *sol.grid();
    let cells = var.cells(problem, &grid)?;
    let mut rows: Vec<Vec<f64>> = sol.u_star.components().to_vec();
    for (row, v) in rows.iter_mut().zip(&var.v) {
        for u in &mut row[var.tau..var.tau + cells] {
            *u = *v;
        }
    }
    let u_theta = SampledPath::new(grid, rows)?;
    let x_theta = simulate(problem, &u_theta)?;
    let n = problem.state_dim();
    let mut sup_dist: f64 = 0.0;
    for i in 0..n {
        for (a, b) in x_theta.component(i).iter().zip(sol.x_star.component(i)) {
            sup_dist = sup_dist.max((a - b).abs());
        }
    }
    let j_theta = objective(problem, &x_theta, &u_theta)?;
    let j_star = objective(problem, &sol.x_star, &sol.u_star)?;
    let delta_j = (j_theta - j_star) / var.theta;

    let t_tau = grid.t(var.tau);
    let x_tau = sol.x_star.at(var.tau);
    let f_v = problem.eval_f(t_tau, &x_tau, &var.v)?;
    let f_u = problem.eval_f(t_tau, &x_tau, &sol.u_star.at(var.tau))?;
    let jump: Vec<f64> = f_v.iter().zip(&f_u).map(|(a, b)| a - b).collect();
    let eta = if var.tau + 2 <= grid.n_steps() {
        Some(solve_variational(
            problem,
            &sol.x_star,
            &sol.u_star,
            &VariationalInit { tau: t_tau, jump },
            &problem.orders,
            &grid,
        )?)
    } else {
        None
    };
    let start = gap_window_start.unwrap_or(t_tau + var.theta);
    let mut eta_gap: f64 = 0.0;
    if let Some(eta) = eta {
        for k in (0..grid.len()).filter(|&k| grid.t(k) >= start - 1e-12 * grid.h()) {
            if eta.is_flagged(k) {
                continue;
            }
            for i in 0..n {
                let q = (x_theta.value(i, k) - sol.x_star.value(i, k)) / var.theta;
                eta_gap = eta_gap.max((q - eta.value(i, k)).abs());
            }
        }
    }
    Ok(NeedleRecord { sup_dist, delta_j, eta_gap })
}

/// Sampled constants of the standing assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsEstimate {
    /// Lipschitz constant of `f` and `L` in `x`.
    pub lipschitz_k: f64,
    /// `sup |L|, ||f||`.
    pub bound_m: f64,
    /// `sup ||dL/dx||, ||df/dx||`.
    pub deriv_bound_n: f64,
}

/// `M theta^abar / Gamma(abar + 1) E_{abar,1}(K (b - a)^abar)`.
pub fn needle_distance_bound(c: &ConstantsEstimate, alpha_bar: f64, theta: f64, horizon: f64) -> Result<f64> {
    let ml = MittagLefflerParams::new(alpha_bar, 1.0)?;
    Ok(c.bound_m * theta.powf(alpha_bar) / gamma_fn(alpha_bar + 1.0)?
        * mittag_leffler(ml, c.lipschitz_k * horizon.powf(alpha_bar))?)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Monte Carlo estimate over `t in [a, b]`, `x` in the box spanned by the
/// trajectories of the constant controls `lower`, midpoint and `upper`
/// (inflated by 50%), and `u` in the control set.
pub fn estimate_constants(
    problem: &ProblemSpec,
    grid: &TimeGrid,
    sample_count: usize,
    seed: u64,
) -> Result<ConstantsEstimate> {
    let n = problem.state_dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for u in [problem.omega.lower().to_vec(), problem.omega.midpoint(), problem.omega.upper().to_vec()] {
        let control = SampledPath::new(*grid, u.iter().map(|v| vec![*v; grid.len()]).collect())?;
        let x = simulate(problem, &control)?;
        for i in 0..n {
            for v in x.component(i) {
                lo[i] = lo[i].min(*v);
                hi[i] = hi[i].max(*v);
            }
        }
    }
    for i in 0..n {
        let width = hi[i] - lo[i];
        let pad = if width > 0.0 { 0.25 * width } else { 0.5 * (1.0 + lo[i].abs()) };
        lo[i] -= pad;
        hi[i] += pad;
    }
    estimate_constants_in_box(problem, &lo, &hi, sample_count, seed)
}

/// As [`estimate_constants`] with an explicit state box.
pub fn estimate_constants_in_box(
    problem: &ProblemSpec,
    x_lo: &[f64],
    x_hi: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<ConstantsEstimate> {
    let n = problem.state_dim();
    let m = problem.control_dim();
    if x_lo.len() != n || x_hi.len() != n {
        return Err(Error::dim("state box does not match the state dimension"));
    }
    if sample_count < 100 {
        return Err(Error::invalid("at least 100 samples are required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = &problem.omega;
    let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut est = ConstantsEstimate { lipschitz_k: 0.0, bound_m: 0.0, deriv_bound_n: 0.0 };
    for s in 0..sample_count {
        let t = uniform(&mut rng, problem.a, problem.b);
        let x: Vec<f64> = (0..n).map(|i| uniform(&mut rng, x_lo[i], x_hi[i])).collect();
        let u: Vec<f64> = if s % 4 == 3 {
            (0..m).map(|j| if rng.random::<bool>() { omega.upper()[j] } else { omega.lower()[j] }).collect()
        } else {
            (0..m).map(|j| uniform(&mut rng, omega.lower()[j], omega.upper()[j])).collect()
        };
        let y: Vec<f64> = (0..n).map(|i| uniform(&mut rng, x_lo[i], x_hi[i])).collect();
        let f = problem.eval_f(t, &x, &u)?;
        let l = problem.eval_lagrangian(t, &x, &u)?;
        est.bound_m = est.bound_m.max(l.abs()).max(norm(&f));
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dist = norm(&dx);
        if dist > 0.0 {
            let fy = problem.eval_f(t, &y, &u)?;
            let ly = problem.eval_lagrangian(t, &y, &u)?;
            let df: Vec<f64> = f.iter().zip(&fy).map(|(a, b)| a - b).collect();
            est.lipschitz_k = est.lipschitz_k.max(norm(&df) / dist).max((l - ly).abs() / dist);
        }
        let jac = problem.jacobian_x(t, &x, &u)?;
        let grad_l = problem.lagrangian_grad_x(t, &x, &u)?;
        est.deriv_bound_n = est.deriv_bound_n.max(spectral_norm(&jac)).max(norm(&grad_l));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmp::{forward_backward_sweep, SweepConfig};
    use crate::problem::builtin;
    use crate::problem::expr::parse_expression;

    #[test]
    fn identity_needle_changes_nothing() {
        let p = builtin("zero_control").unwrap();
        let g = p.grid(64).unwrap();
        let sol = forward_backward_sweep(&p, &g, &SweepConfig::default()).unwrap();
        let var = NeedleVariation { tau: 20, v: sol.u_star.at(20), theta: 4.0 * g.h() };
        let r = needle_experiment(&p, &sol, &var, None).unwrap();
        assert_eq!(r.sup_dist, 0.0);
        assert_eq!(r.delta_j, 0.0);
    }

    #[test]
    fn needle_validation() {
        let p = builtin("lq_smoke").unwrap();
        let g = p.grid(64).unwrap();
        let sol = forward_backward_sweep(&p, &g, &SweepConfig::default()).unwrap();
        let bad = [
            NeedleVariation { tau: 10, v: vec![11.0], theta: g.h() },
            NeedleVariation { tau: 10, v: vec![1.0], theta: 0.5 * g.h() },
            NeedleVariation { tau: 62, v: vec![1.0], theta: 4.0 * g.h() },
        ];
        for var in bad {
            assert!(needle_experiment(&p, &sol, &var, None).is_err());
        }
    }

    #[test]
    fn constants_of_trivial_and_linear_fields() {
        let mut p = builtin("zero_control").unwrap();
        p.f = vec![parse_expression("0", 1, 1).unwrap()];
        p.lagrangian = parse_expression("0", 1, 1).unwrap();
        let c = estimate_constants_in_box(&p, &[-2.0], &[2.0], 200, 7).unwrap();
        assert_eq!((c.lipschitz_k, c.bound_m, c.deriv_bound_n), (0.0, 0.0, 0.0));
        p.f = vec![parse_expression("x1", 1, 1).unwrap()];
        let c = estimate_constants_in_box(&p, &[-2.0], &[2.0], 500, 7).unwrap();
        assert!((c.lipschitz_k - 1.0).abs() < 0.1);
        assert!((c.deriv_bound_n - 1.0).abs() < 0.1);
        assert!(estimate_constants_in_box(&p, &[-2.0], &[2.0], 50, 7).is_err());
    }

    #[test]
    fn example_bound_sees_the_upper_corner() {
        let p = builtin("paper_example").unwrap();
        let g = p.grid(64).unwrap();
        let c = estimate_constants(&p, &g, 400, 1).unwrap();
        assert!(c.bound_m >= (14f64.exp() - 1.0));
    }
}
