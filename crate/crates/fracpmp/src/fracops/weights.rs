//! Quadrature weights for the fractional operators, cached per
//! `(order rounded to 1e-12, length, scheme)`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use super::jacobi::GaussJacobi;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Scheme {
    ProductTrapezoid,
    ProductRectangle,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    order: i64,
    len: usize,
    scheme: Scheme,
}

fn order_key(order: f64) -> i64 {
    (order * 1e12).round() as i64
}

type Table<K, V> = RwLock<HashMap<K, Arc<V>>>;

fn toeplitz_cache() -> &'static Table<Key, Vec<f64>> {
    static CACHE: OnceLock<Table<Key, Vec<f64>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn cached(key: Key, build: impl FnOnce() -> Vec<f64>) -> Arc<Vec<f64>> {
    if let Some(w) = toeplitz_cache().read().unwrap().get(&key) {
        return Arc::clone(w);
    }
    let w = Arc::new(build());
    toeplitz_cache()
        .write()
        .unwrap()
        .entry(key)
        .or_insert(w)
        .clone()
}

/// `(m+1)^p - 2 m^p + (m-1)^p` for `m >= 1` without catastrophic cancellation.
fn second_difference(p: f64, m: f64) -> f64 {
    let x = 1.0 / m;
    m.powf(p) * (((p * x.ln_1p()).exp_m1()) + (p * (-x).ln_1p()).exp_m1())
}

/// `(m+1)^p - m^p` for `m >= 0`.
fn first_difference(p: f64, m: f64) -> f64 {
    if m == 0.0 {
        1.0
    } else {
        m.powf(p) * (p * (1.0 / m).ln_1p()).exp_m1()
    }
}

/// Interior product-trapezoid weights `c_m`, `m = 0..len`, for an integral of
/// order `beta`: node `j = k - m` (with `1 <= j <= k`) carries `c_m`, scaled by
/// `h^beta / Gamma(beta + 2)`.
pub(crate) fn trapezoid(beta: f64, len: usize) -> Arc<Vec<f64>> {
    let key = Key { order: order_key(beta), len, scheme: Scheme::ProductTrapezoid };
    cached(key, || {
        let p = beta + 1.0;
        (0..len)
            .map(|m| if m == 0 { 1.0 } else { second_difference(p, m as f64) })
            .collect()
    })
}

/// Weight of the initial node `j = 0` in the product-trapezoid sum at node `k >= 1`.
pub(crate) fn trapezoid_start(beta: f64, k: usize) -> f64 {
    let m = (k - 1) as f64;
    if m == 0.0 {
        return beta;
    }
    // m^(beta+1) - (m - beta)(m+1)^beta
    let x = 1.0 / m;
    let e1 = (beta * x.ln_1p()).exp_m1();
    m.powf(beta + 1.0) * (beta * x * (1.0 + e1) - e1)
}

/// Product-rectangle weights `b_m = (m+1)^beta - m^beta`, scaled by `h^beta / Gamma(beta + 1)`.
pub(crate) fn rectangle(beta: f64, len: usize) -> Arc<Vec<f64>> {
    let key = Key { order: order_key(beta), len, scheme: Scheme::ProductRectangle };
    cached(key, || (0..len).map(|m| first_difference(beta, m as f64)).collect())
}

/// L1 weights `d_l = (l+1)^(1-alpha) - l^(1-alpha)`, scaled by `h^-alpha / Gamma(2 - alpha)`.
pub(crate) fn l1(alpha: f64, len: usize) -> Arc<Vec<f64>> {
    let key = Key { order: order_key(alpha), len, scheme: Scheme::L1 };
    cached(key, || (0..len).map(|l| first_difference(1.0 - alpha, l as f64)).collect())
}

/// Hat-function moments against a weight singular at both ends of the history:
/// `W[k][j] = int_0^k (k - s)^(beta - 1) s^gamma phi_j(s) ds` in units of `h`.
#[derive(Debug)]
pub(crate) struct SingularWeights {
    rows: Vec<Vec<f64>>,
}

impl SingularWeights {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct SingularKey {
    beta: i64,
    gamma: i64,
}

const CELL_POINTS: usize = 12;

fn singular_cache() -> &'static Table<SingularKey, SingularWeights> {
    static CACHE: OnceLock<Table<SingularKey, SingularWeights>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Weights for at least `len` rows; the rows do not depend on the total length,
/// so one table per `(beta, gamma)` is grown on demand.
pub(crate) fn singular(beta: f64, gamma: f64, len: usize) -> Arc<SingularWeights> {
    let key = SingularKey { beta: order_key(beta), gamma: order_key(gamma) };
    if let Some(w) = singular_cache().read().unwrap().get(&key) {
        if w.len() >= len {
            return Arc::clone(w);
        }
    }
    let w = Arc::new(build_singular(beta, gamma, len));
    let mut table = singular_cache().write().unwrap();
    match table.get(&key) {
        Some(existing) if existing.len() >= len => Arc::clone(existing),
        _ => {
            table.insert(key, Arc::clone(&w));
            w
        }
    }
}

fn build_singular(beta: f64, gamma: f64, len: usize) -> SingularWeights {
    let a = beta - 1.0;
    let both = GaussJacobi::new(CELL_POINTS, a, gamma);
    let origin = GaussJacobi::new(CELL_POINTS, 0.0, gamma);
    let target = GaussJacobi::new(CELL_POINTS, a, 0.0);
    let plain = GaussJacobi::new(CELL_POINTS, 0.0, 0.0);
    let mut rows = Vec::with_capacity(len);
    rows.push(vec![0.0]);
    for k in 1..len {
        let kf = k as f64;
        let mut row = vec![0.0; k + 1];
        for m in 0..k {
            let mf = m as f64;
            // the rule absorbs whichever singular factor touches this cell
            let at_origin = m == 0;
            let at_target = m + 1 == k;
            let rule = match (at_origin, at_target) {
                (true, true) => &both,
                (true, false) => &origin,
                (false, true) => &target,
                (false, false) => &plain,
            };
            let ea = if at_target { a } else { 0.0 };
            let eb = if at_origin { gamma } else { 0.0 };
            let scale = 0.5f64.powf(ea + eb + 1.0);
            let (mut left, mut right) = (0.0, 0.0);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let s = mf + 0.5 * (x + 1.0);
                let mut f = 1.0;
                if !at_target {
                    f *= (kf - s).powf(a);
                }
                if !at_origin {
                    f *= s.powf(gamma);
                }
                let wf = w * f;
                left += wf * (mf + 1.0 - s);
                right += wf * (s - mf);
            }
            row[m] += scale * left;
            row[m + 1] += scale * right;
        }
        rows.push(row);
    }
    SingularWeights { rows }
}
