//! Analytic-solution suites used to measure empirical orders.

use serde::Serialize;

use crate::error::Result;
use crate::fde::{solve_caputo_ivp, FnField};
use crate::fracops::{caputo_derivative, frac_integral, MultiOrder, SampledPath, Side, TimeGrid};
use crate::specfun::{gamma_fn, mittag_leffler, MittagLefflerParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study {
    pub name: String,
    pub n_list: Vec<usize>,
    pub errors: Vec<f64>,
    /// `log2(e_N / e_2N)` for consecutive pairs.
    pub orders: Vec<f64>,
    pub required_order: f64,
    pub pass: bool,
}

/// Slopes `log(e_i / e_{i+1}) / log(N_{i+1} / N_i)`.
pub fn richardson_orders(n_list: &[usize], errors: &[f64]) -> Vec<f64> {
    n_list
        .windows(2)
        .zip(errors.windows(2))
        .map(|(n, e)| (e[0] / e[1]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .collect()
}

fn study(name: &str, n_list: &[usize], required_order: f64, error: impl Fn(usize) -> Result<f64>) -> Result<Study> {
    let errors = n_list.iter().map(|&n| error(n)).collect::<Result<Vec<_>>>()?;
    let orders = richardson_orders(n_list, &errors);
    let pass = orders.last().is_some_and(|o| *o >= required_order);
    Ok(Study { name: name.into(), n_list: n_list.to_vec(), errors, orders, required_order, pass })
}

/// Sup error of the forward solver on `cD^0.6 x = -x`, `x(0) = 1`, against `E_0.6(-t^0.6)`.
pub fn mittag_leffler_ivp_error(n: usize) -> Result<f64> {
    let alpha = 0.6;
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let field = FnField::new(1, 1, |_, x, _| vec![-x[0]]);
    let x = solve_caputo_ivp(&field, &SampledPath::zeros(grid, 1), &[1.0], &MultiOrder::new(vec![alpha])?, &grid)?;
    let ml = MittagLefflerParams::new(alpha, 1.0)?;
    let mut err: f64 = 0.0;
    for (k, t) in grid.nodes().enumerate() {
        err = err.max((x.value(0, k) - mittag_leffler(ml, -t.powf(alpha))?).abs());
    }
    Ok(err)
}

/// Max error of the L1 Caputo derivative of `t^1.7` at order 0.3 on `t >= 0.1`.
/// Near the origin the singular second derivative caps the order at `1.7 - 0.3`.
pub fn caputo_power_error(n: usize) -> Result<f64> {
    let (alpha, beta) = (0.3, 1.7);
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let p = SampledPath::from_fn(grid, 1, |t| vec![t.powf(beta)])?;
    let d = caputo_derivative(&p, &MultiOrder::new(vec![alpha])?, Side::Left)?;
    let c = gamma_fn(beta + 1.0)? / gamma_fn(beta + 1.0 - alpha)?;
    let mut err: f64 = 0.0;
    for (k, t) in grid.nodes().enumerate().filter(|(_, t)| *t >= 0.1 - 1e-12) {
        err = err.max((d.value(0, k) - c * t.powf(beta - alpha)).abs());
    }
    Ok(err)
}

/// Sup error of the product-trapezoid integral of `t^1.5` at order 0.4.
pub fn integral_power_error(n: usize) -> Result<f64> {
    let (alpha, beta) = (0.4, 1.5);
    let grid = TimeGrid::new(0.0, 1.0, n)?;
    let p = SampledPath::from_fn(grid, 1, |t| vec![t.powf(beta)])?;
    let r = frac_integral(&p, &MultiOrder::new(vec![alpha])?, Side::Left)?;
    let c = gamma_fn(beta + 1.0)? / gamma_fn(beta + 1.0 + alpha)?;
    let mut err: f64 = 0.0;
    for (k, t) in grid.nodes().enumerate() {
        err = err.max((r.value(0, k) - c * t.powf(beta + alpha)).abs());
    }
    Ok(err)
}

/// Every suite at the given resolutions. Thresholds sit about 10% below the nominal order.
pub fn run_all(n_list: &[usize]) -> Result<Vec<Study>> {
    Ok(vec![
        study("mittag_leffler_ivp (alpha = 0.6)", n_list, 0.9 * 0.6, mittag_leffler_ivp_error)?,
        study("l1_caputo_power_rule (alpha = 0.3)", n_list, 1.5, caputo_power_error)?,
        study("trapezoid_integral_power_rule (alpha = 0.4)", n_list, 0.9 * 2.0, integral_power_error)?,
    ])
}
