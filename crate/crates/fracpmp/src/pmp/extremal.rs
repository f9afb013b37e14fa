//! Comparison of a computed control against a closed-form candidate that is
//! only defined on part of the horizon.

use serde::Serialize;

use super::PmpSolution;
use crate::problem::ControlSet;
use crate::specfun::gamma_unchecked as gamma;

/// Left end of `{t : Gamma(2/3) (5 - t)^(1/3) < 1}` for the built-in
/// `paper_example`.
pub fn paper_validity_start() -> f64 {
    5.0 - gamma(2.0 / 3.0).powi(-3)
}

/// `atanh(Gamma(2/3) (5 - t)^(1/3))` where the argument lies in `(-1, 1)`.
pub fn paper_extremal_control(t: f64) -> Option<f64> {
    let z = gamma(2.0 / 3.0) * (5.0 - t).max(0.0).cbrt();
    (z.abs() < 1.0).then(|| z.atanh())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormComparison {
    /// Nodes where the closed form is defined, as `[first, last]` times.
    pub validity_window: Option<(f64, f64)>,
    pub validity_nodes: usize,
    /// Nodes where the computed control lies strictly inside the box.
    pub interior_window: Option<(f64, f64)>,
    pub interior_nodes: usize,
    /// Nodes in both sets; the comparison runs only there.
    pub compared_nodes: usize,
    pub max_abs_diff: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

fn span(times: &[f64]) -> Option<(f64, f64)> {
    Some((*times.first()?, *times.last()?))
}

/// Compares the first control component with `formula` on the intersection of
/// the formula's domain and the interior of the control box.
pub fn closed_form_comparison(
    sol: &PmpSolution,
    omega: &ControlSet,
    formula: impl Fn(f64) -> Option<f64>,
    tolerance: f64,
) -> ClosedFormComparison {
    let grid = sol.grid();
    let (lo, hi) = (omega.lower()[0], omega.upper()[0]);
    let margin = 1e-9 * (hi - lo);
    let mut valid = Vec::new();
    let mut interior = Vec::new();
    let mut max_abs_diff: Option<f64> = None;
    let mut compared = 0;
    for k in 0..grid.len() {
        if sol.lambda.is_flagged(k) {
            continue;
        }
        let t = grid.t(k);
        let u = sol.u_star.value(0, k);
        let closed = formula(t);
        let inside = u > lo + margin && u < hi - margin;
        if closed.is_some() {
            valid.push(t);
        }
        if inside {
            interior.push(t);
        }
        if let (Some(c), true) = (closed, inside) {
            compared += 1;
            let d = (u - c).abs();
            max_abs_diff = Some(max_abs_diff.map_or(d, |m| m.max(d)));
        }
    }
    ClosedFormComparison {
        validity_window: span(&valid),
        validity_nodes: valid.len(),
        interior_window: span(&interior),
        interior_nodes: interior.len(),
        compared_nodes: compared,
        max_abs_diff,
        tolerance,
        pass: max_abs_diff.is_none_or(|d| d <= tolerance),
    }
}
