//! Gauss-Jacobi rules via Golub-Welsch.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::specfun::ln_gamma_unchecked;

/// Nodes and weights for `int_{-1}^{1} (1-x)^a (1+x)^b g(x) dx`.
#[derive(Debug, Clone)]
pub(crate) struct GaussJacobi {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussJacobi {
    pub fn new(points: usize, a: f64, b: f64) -> Self {
        assert!(a > -1.0 && b > -1.0, "Jacobi exponents must exceed -1");
        let n = points;
        let mut jm = DMatrix::<f64>::zeros(n, n);
        let ab = a + b;
        for i in 0..n {
            let k = i as f64;
            let diag = if i == 0 {
                (b - a) / (ab + 2.0)
            } else {
                (b * b - a * a) / ((2.0 * k + ab) * (2.0 * k + ab + 2.0))
            };
            jm[(i, i)] = diag;
            if i + 1 < n {
                let k = (i + 1) as f64;
                let s = 2.0 * k + ab;
                let off2 = if i == 0 {
                    4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
                } else {
                    4.0 * k * (k + a) * (k + b) * (k + ab) / (s * s * (s + 1.0) * (s - 1.0))
                };
                let off = off2.sqrt();
                jm[(i, i + 1)] = off;
                jm[(i + 1, i)] = off;
            }
        }
        let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma_unchecked(a + 1.0) + ln_gamma_unchecked(b + 1.0)
            - ln_gamma_unchecked(ab + 2.0))
        .exp();
        let eig = SymmetricEigen::new(jm);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }
}
