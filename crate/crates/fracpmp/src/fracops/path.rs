use crate::error::{Error, Result};

/// Per-component fractional orders, each strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiOrder(Vec<f64>);

impl MultiOrder {
    pub fn new(orders: Vec<f64>) -> Result<Self> {
        if orders.is_empty() {
            return Err(Error::invalid("a multi-order needs at least one component"));
        }
        if let Some((i, a)) = orders.iter().enumerate().find(|(_, a)| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::domain(format!("order {} = {a} is outside (0, 1)", i + 1)));
        }
        Ok(Self(orders))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Smallest component order.
    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Uniform grid `t_k = a + k h`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    a: f64,
    b: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(a: f64, b: f64, n_steps: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::invalid(format!("time interval [{a}, {b}] is empty or non-finite")));
        }
        if n_steps < 2 {
            return Err(Error::invalid(format!("a grid needs at least 2 steps, got {n_steps}")));
        }
        Ok(Self { a, b, n_steps })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n_steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.b
        } else {
            self.a + k as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.t(k))
    }

    /// Index of the node closest to `t`, clamped to the grid.
    pub fn nearest_node(&self, t: f64) -> usize {
        let k = ((t - self.a) / self.h()).round();
        k.clamp(0.0, self.n_steps as f64) as usize
    }
}

/// Which end of `[a, b]` an operator integrates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Self {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    RiemannLiouvilleIntegral,
    RiemannLiouvilleDerivative,
    CaputoDerivative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OperatorKind {
    pub side: Side,
    pub family: Family,
}

/// Known algebraic blow-up of one component at an endpoint:
/// the component behaves like `dist^exponent` with `-1 < exponent < 0`,
/// where `dist` is `t - a` (left) or `b - t` (right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singularity {
    pub side: Side,
    pub exponent: f64,
}

impl Singularity {
    pub fn new(side: Side, exponent: f64) -> Result<Self> {
        if !(exponent > -1.0 && exponent < 0.0) {
            return Err(Error::domain(format!(
                "endpoint singularity exponent must lie in (-1, 0), got {exponent}"
            )));
        }
        Ok(Self { side, exponent })
    }
}

/// A vector function sampled on a [`TimeGrid`].
///
/// Values are stored component-major. Nodes whose value could not be
/// represented (an endpoint where the function blows up) are flagged and hold a
/// copy of their neighbor; consumers must skip flagged nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: TimeGrid,
    values: Vec<Vec<f64>>,
    flags: Vec<bool>,
    singular: Vec<Option<Singularity>>,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::dim("a sampled path needs at least one component"));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != grid.len() {
                return Err(Error::dim(format!(
                    "component {} has {} samples, grid has {} nodes",
                    i + 1,
                    row.len(),
                    grid.len()
                )));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::domain(format!("component {} is non-finite at node {k}", i + 1)));
            }
        }
        let dim = values.len();
        Ok(Self {
            grid,
            values,
            flags: vec![false; grid.len()],
            singular: vec![None; dim],
        })
    }

    pub fn zeros(grid: TimeGrid, dim: usize) -> Self {
        Self {
            grid,
            values: vec![vec![0.0; grid.len()]; dim],
            flags: vec![false; grid.len()],
            singular: vec![None; dim],
        }
    }

    /// Samples `f(t)` at every node.
    pub fn from_fn(grid: TimeGrid, dim: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = vec![Vec::with_capacity(grid.len()); dim];
        for t in grid.nodes() {
            let v = f(t);
            if v.len() != dim {
                return Err(Error::dim(format!("sampler returned {} values, expected {dim}", v.len())));
            }
            for (row, x) in values.iter_mut().zip(v) {
                row.push(x);
            }
        }
        Self::new(grid, values)
    }

    /// Samples a scalar function whose value blows up at one endpoint; the
    /// endpoint node is flagged, filled from its neighbor, and the component is
    /// annotated with the singularity.
    pub fn scalar_with_singularity(
        grid: TimeGrid,
        singularity: Singularity,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let n = grid.n_steps();
        let (end, neighbor) = match singularity.side {
            Side::Left => (0, 1),
            Side::Right => (n, n - 1),
        };
        let row: Vec<f64> = (0..=n).map(|k| if k == end { f(grid.t(neighbor)) } else { f(grid.t(k)) }).collect();
        let mut path = Self::new(grid, vec![row])?;
        path.flags[end] = true;
        path.singular[0] = Some(singularity);
        Ok(path)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// All components at node `k`.
    pub fn at(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[k]).collect()
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[i][k]
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn is_flagged(&self, k: usize) -> bool {
        self.flags[k]
    }

    pub fn flag(&mut self, k: usize) {
        self.flags[k] = true;
    }

    pub fn singularity(&self, i: usize) -> Option<Singularity> {
        self.singular[i]
    }

    pub fn set_singularity(&mut self, i: usize, s: Option<Singularity>) {
        self.singular[i] = s;
    }

    /// Mirror image under `t -> a + b - t`.
    pub fn reflected(&self) -> Self {
        let values = self
            .values
            .iter()
            .map(|row| row.iter().rev().copied().collect())
            .collect();
        let mut flags = self.flags.clone();
        flags.reverse();
        let singular = self
            .singular
            .iter()
            .map(|s| s.map(|s| Singularity { side: s.side.opposite(), exponent: s.exponent }))
            .collect();
        Self { grid: self.grid, values, flags, singular }
    }

    pub(crate) fn from_parts(
        grid: TimeGrid,
        values: Vec<Vec<f64>>,
        flags: Vec<bool>,
        singular: Vec<Option<Singularity>>,
    ) -> Self {
        debug_assert_eq!(values.len(), singular.len());
        debug_assert_eq!(flags.len(), grid.len());
        Self { grid, values, flags, singular }
    }

    /// Discrete sup-norm over unflagged nodes.
    pub fn sup_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        for row in &self.values {
            for (k, v) in row.iter().enumerate() {
                if !self.flags[k] {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_order_validation() {
        assert!(MultiOrder::new(vec![]).is_err());
        assert!(MultiOrder::new(vec![0.5, 1.0]).is_err());
        assert!(MultiOrder::new(vec![0.0]).is_err());
        let m = MultiOrder::new(vec![0.7, 0.2, 0.5]).unwrap();
        assert_eq!(m.min(), 0.2);
    }

    #[test]
    fn grid_nodes() {
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        let g = TimeGrid::new(1.0, 5.0, 8).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.t(0), 1.0);
        assert_eq!(g.t(8), 5.0);
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.nearest_node(2.74), 3);
        assert_eq!(g.nearest_node(2.76), 4);
        assert_eq!(g.nearest_node(-3.0), 0);
        let nodes: Vec<f64> = g.nodes().collect();
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn path_rejects_non_finite_and_bad_lengths() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        assert!(SampledPath::new(g, vec![vec![0.0; 4]]).is_err());
        assert!(SampledPath::new(g, vec![vec![0.0, 1.0, f64::NAN, 0.0, 0.0]]).is_err());
        assert!(SampledPath::new(g, vec![]).is_err());
    }

    #[test]
    fn reflection_is_an_involution() {
        let g = TimeGrid::new(0.0, 1.0, 6).unwrap();
        let mut p = SampledPath::from_fn(g, 2, |t| vec![t, t * t]).unwrap();
        p.flag(0);
        p.set_singularity(1, Some(Singularity::new(Side::Left, -0.5).unwrap()));
        let r = p.reflected();
        assert!(r.is_flagged(6));
        assert_eq!(r.singularity(1).unwrap().side, Side::Right);
        assert_eq!(r.value(0, 0), 1.0);
        assert_eq!(r.reflected(), p);
    }
}
