//! Discrete Riemann-Liouville integrals, Caputo and Riemann-Liouville
//! derivatives on a uniform grid, applied component-wise with per-component
//! orders.
//!
//! Integrals use product-trapezoid weights (the piecewise-linear interpolant is
//! integrated exactly against the kernel); Caputo derivatives use the L1
//! scheme. Right-sided operators are the left-sided code applied to the
//! time-reflected path. Components annotated with an endpoint [`Singularity`]
//! at the origin of the integration history are integrated as
//! `dist^exponent * mu(t)` with `mu` piecewise linear, so the blow-up is never
//! sampled.

mod jacobi;
mod path;
pub(crate) mod weights;

pub use path::{Family, MultiOrder, OperatorKind, SampledPath, Side, Singularity, TimeGrid};

use crate::error::{Error, Result};
use crate::specfun::gamma_unchecked as gamma;

const EXPONENT_EPS: f64 = 1e-12;

/// `I^beta_{0+}` of a regular row by product trapezoid; node 0 is 0.
pub(crate) fn trapezoid_integral(f: &[f64], beta: f64, h: f64) -> Vec<f64> {
    let n = f.len();
    let c = weights::trapezoid(beta, n);
    let scale = h.powf(beta) / gamma(beta + 2.0);
    let mut out = vec![0.0; n];
    for k in 1..n {
        let mut s = weights::trapezoid_start(beta, k) * f[0];
        for j in 1..=k {
            s += c[k - j] * f[j];
        }
        out[k] = scale * s;
    }
    out
}

/// `J_k = 1/Gamma(beta) int_0^{t_k} (t_k - s)^(beta-1) s^gamma mu(s) ds` for `k >= 1`,
/// with `mu` piecewise linear; entry 0 is left at 0.
pub(crate) fn singular_integral(mu: &[f64], beta: f64, gamma_exp: f64, h: f64) -> Vec<f64> {
    let n = mu.len();
    let w = weights::singular(beta, gamma_exp, n);
    let scale = h.powf(beta + gamma_exp) / gamma(beta);
    let mut out = vec![0.0; n];
    for (k, o) in out.iter_mut().enumerate().skip(1) {
        let s: f64 = w.row(k).iter().zip(mu).map(|(w, m)| w * m).sum();
        *o = scale * s;
    }
    out
}

/// Smooth factor `f / dist^gamma` of a row singular at its first node; the
/// first entry is extrapolated linearly.
pub(crate) fn strip_singularity(f: &[f64], gamma_exp: f64, h: f64) -> Vec<f64> {
    let mut mu: Vec<f64> = f
        .iter()
        .enumerate()
        .map(|(j, v)| if j == 0 { 0.0 } else { v / (j as f64 * h).powf(gamma_exp) })
        .collect();
    mu[0] = if mu.len() > 2 { 2.0 * mu[1] - mu[2] } else { mu[1] };
    mu
}

struct RowResult {
    values: Vec<f64>,
    flagged_origin: bool,
    singular: Option<f64>,
}

/// `I^beta_{0+}[s^gamma mu(s)]` with the value at node 0 resolved from the
/// exponent `beta + gamma`; returns the exponent when the result blows up there.
pub(crate) fn kernel_integral(mu: &[f64], beta: f64, gamma_exp: f64, h: f64) -> (Vec<f64>, Option<f64>) {
    let mut values = singular_integral(mu, beta, gamma_exp, h);
    let eps = beta + gamma_exp;
    if eps > EXPONENT_EPS {
        values[0] = 0.0;
        (values, None)
    } else if eps.abs() <= EXPONENT_EPS {
        values[0] = mu[0] * gamma(gamma_exp + 1.0) / gamma(gamma_exp + beta + 1.0);
        (values, None)
    } else {
        values[0] = values[1];
        (values, Some(eps))
    }
}

/// Left integral of one component, honoring a singularity at node 0.
fn left_integral_row(f: &[f64], origin_exponent: Option<f64>, beta: f64, h: f64) -> RowResult {
    let Some(g) = origin_exponent else {
        return RowResult { values: trapezoid_integral(f, beta, h), flagged_origin: false, singular: None };
    };
    let (values, singular) = kernel_integral(&strip_singularity(f, g, h), beta, g, h);
    RowResult { values, flagged_origin: singular.is_some(), singular }
}

fn check_dims(path: &SampledPath, orders: &[f64]) -> Result<()> {
    if path.dim() != orders.len() {
        return Err(Error::dim(format!(
            "path has {} components but {} orders were given",
            path.dim(),
            orders.len()
        )));
    }
    Ok(())
}

/// Left integral with orders in `(0, 1]` (order 1 is the plain integral).
fn left_integral(path: &SampledPath, orders: &[f64]) -> SampledPath {
    let h = path.grid().h();
    let mut flags = vec![false; path.grid().len()];
    let mut singular = Vec::with_capacity(path.dim());
    let mut values = Vec::with_capacity(path.dim());
    for (i, &beta) in orders.iter().enumerate() {
        let origin = path
            .singularity(i)
            .filter(|s| s.side == Side::Left)
            .map(|s| s.exponent);
        let row = left_integral_row(path.component(i), origin, beta, h);
        flags[0] |= row.flagged_origin;
        singular.push(row.singular.map(|e| Singularity { side: Side::Left, exponent: e }));
        values.push(row.values);
    }
    SampledPath::from_parts(*path.grid(), values, flags, singular)
}

pub(crate) fn integral_with_orders(path: &SampledPath, orders: &[f64], side: Side) -> Result<SampledPath> {
    check_dims(path, orders)?;
    if let Some(b) = orders.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
        return Err(Error::domain(format!("integral order {b} outside (0, 1]")));
    }
    Ok(match side {
        Side::Left => left_integral(path, orders),
        Side::Right => left_integral(&path.reflected(), orders).reflected(),
    })
}

/// Riemann-Liouville fractional integral `I^{alpha_i}` from the left (`a+`) or right (`b-`).
pub fn frac_integral(path: &SampledPath, orders: &MultiOrder, side: Side) -> Result<SampledPath> {
    integral_with_orders(path, orders.as_slice(), side)
}

fn complement(orders: &MultiOrder) -> Vec<f64> {
    orders.as_slice().iter().map(|a| 1.0 - a).collect()
}

fn left_caputo(path: &SampledPath, orders: &MultiOrder) -> SampledPath {
    let grid = *path.grid();
    let h = grid.h();
    let n = grid.len();
    let mut values = Vec::with_capacity(path.dim());
    for (i, &alpha) in orders.as_slice().iter().enumerate() {
        let x = path.component(i);
        let d = weights::l1(alpha, n);
        let scale = h.powf(-alpha) / gamma(2.0 - alpha);
        let mut out = vec![0.0; n];
        for k in 1..n {
            let mut s = 0.0;
            for j in 0..k {
                s += d[k - 1 - j] * (x[j + 1] - x[j]);
            }
            out[k] = scale * s;
        }
        out[0] = out[1];
        values.push(out);
    }
    let mut flags = vec![false; n];
    flags[0] = true;
    SampledPath::from_parts(grid, values, flags, vec![None; path.dim()])
}

/// Caputo derivative `I^{1-alpha_i}(d/dt x_i)` (left) or `-I^{1-alpha_i}_{b-}(d/dt x_i)` (right)
/// by the L1 scheme. The endpoint where the scheme is undefined is flagged.
pub fn caputo_derivative(path: &SampledPath, orders: &MultiOrder, side: Side) -> Result<SampledPath> {
    check_dims(path, orders.as_slice())?;
    Ok(match side {
        Side::Left => left_caputo(path, orders),
        Side::Right => left_caputo(&path.reflected(), orders).reflected(),
    })
}

fn left_rl(path: &SampledPath, orders: &MultiOrder) -> SampledPath {
    let grid = *path.grid();
    let h = grid.h();
    let n = grid.len();
    let q = left_integral(path, &complement(orders));
    let mut values = Vec::with_capacity(path.dim());
    let mut singular = Vec::with_capacity(path.dim());
    for (i, &alpha) in orders.as_slice().iter().enumerate() {
        let q = q.component(i);
        let mut d = vec![0.0; n];
        for k in 1..n - 1 {
            d[k] = (q[k + 1] - q[k - 1]) / (2.0 * h);
        }
        d[n - 1] = (3.0 * q[n - 1] - 4.0 * q[n - 2] + q[n - 3]) / (2.0 * h);
        d[0] = d[1];
        values.push(d);
        let exponent = match path.singularity(i) {
            Some(s) if s.side == Side::Left => Some(s.exponent - alpha),
            _ if path.value(i, 0) != 0.0 => Some(-alpha),
            _ => None,
        };
        singular.push(
            exponent
                .filter(|e| *e > -1.0)
                .map(|e| Singularity { side: Side::Left, exponent: e }),
        );
    }
    let mut flags = vec![false; n];
    flags[0] = true;
    SampledPath::from_parts(grid, values, flags, singular)
}

/// Riemann-Liouville derivative `d/dt I^{1-alpha_i}_{a+}` (left) or
/// `-d/dt I^{1-alpha_i}_{b-}` (right), differentiating the discrete integral by
/// central differences (one-sided at the regular end). The singular end is flagged.
pub fn rl_derivative(path: &SampledPath, orders: &MultiOrder, side: Side) -> Result<SampledPath> {
    check_dims(path, orders.as_slice())?;
    Ok(match side {
        Side::Left => left_rl(path, orders),
        Side::Right => left_rl(&path.reflected(), orders).reflected(),
    })
}

fn trapz(row: &[f64], h: f64) -> f64 {
    let n = row.len();
    h * (0.5 * (row[0] + row[n - 1]) + row[1..n - 1].iter().sum::<f64>())
}

/// `int_a^b` of one row, integrating an annotated endpoint singularity exactly.
fn integrate_row(row: &[f64], sing: Option<Singularity>, h: f64) -> f64 {
    match sing {
        None => trapz(row, h),
        Some(s) => {
            let owned: Vec<f64>;
            let r = match s.side {
                Side::Left => row,
                Side::Right => {
                    owned = row.iter().rev().copied().collect();
                    &owned
                }
            };
            let mu = strip_singularity(r, s.exponent, h);
            *singular_integral(&mu, 1.0, s.exponent, h).last().unwrap()
        }
    }
}

/// `int_a^b x_i(t) dt` for every component.
pub fn definite_integral(path: &SampledPath) -> Vec<f64> {
    let h = path.grid().h();
    (0..path.dim())
        .map(|i| integrate_row(path.component(i), path.singularity(i), h))
        .collect()
}

/// `| int x . cD_{a+} y - [ y . I^{1-alpha}_{b-} x ]_a^b - int y . D_{b-} x |`,
/// the defect of the fractional integration-by-parts identity on the grid.
pub fn integration_by_parts_residual(x: &SampledPath, y: &SampledPath, orders: &MultiOrder) -> Result<f64> {
    if x.grid() != y.grid() {
        return Err(Error::dim("integration by parts needs both paths on the same grid"));
    }
    check_dims(x, orders.as_slice())?;
    check_dims(y, orders.as_slice())?;
    let grid = *x.grid();
    let h = grid.h();
    let n = grid.n_steps();
    let cd_y = caputo_derivative(y, orders, Side::Left)?;
    let ib_x = integral_with_orders(x, &complement(orders), Side::Right)?;
    let rd_x = rl_derivative(x, orders, Side::Right)?;
    let mut lhs = 0.0;
    let mut boundary = 0.0;
    let mut rhs = 0.0;
    for i in 0..orders.len() {
        let prod: Vec<f64> = x.component(i).iter().zip(cd_y.component(i)).map(|(a, b)| a * b).collect();
        let sing = x.singularity(i).filter(|s| s.side == Side::Right);
        lhs += integrate_row(&prod, sing, h);
        boundary += y.value(i, n) * ib_x.value(i, n) - y.value(i, 0) * ib_x.value(i, 0);
        let prod: Vec<f64> = y.component(i).iter().zip(rd_x.component(i)).map(|(a, b)| a * b).collect();
        rhs += integrate_row(&prod, rd_x.singularity(i), h);
    }
    Ok((lhs - boundary - rhs).abs())
}
