//! Gauss–Legendre quadrature on composite panels.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule with `order` nodes on `[-1, 1]` (Newton iteration on `P_order`).
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("quadrature order must be positive".into()));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let p = if n == 1 { x } else { p1 };
                let pm1 = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = x;
            nodes[n - 1 - i] = -x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        nodes.reverse();
        weights.reverse();
        Ok(GaussLegendre { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule over `panels` equal panels of each interval between
    /// consecutive `breaks`.
    pub fn composite(&self, breaks: &[f64], panels: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(breaks.len() * panels * self.order());
        for w in breaks.windows(2) {
            let h = (w[1] - w[0]) / panels as f64;
            for p in 0..panels {
                let a = w[0] + p as f64 * h;
                out.extend(self.on(a, a + h));
            }
        }
        out
    }
}

/// Sorted, deduplicated breakpoints of `[a, b]` including any interior extras.
pub fn breakpoints(a: f64, b: f64, extra: &[f64]) -> Vec<f64> {
    let mut v = vec![a, b];
    v.extend(extra.iter().copied().filter(|x| *x > a && *x < b));
    v.sort_by(|x, y| x.partial_cmp(y).unwrap());
    v.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (1.0 + x.abs()));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_high_degree_polynomials() {
        let g = GaussLegendre::new(10).unwrap();
        let v = g.integrate(-1.0, 2.0, |x| x.powi(19));
        let want = (2f64.powi(20) - 1.0) / 20.0;
        assert!((v - want).abs() / want < 1e-13);
        assert!((g.weights().iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_order_has_center_node() {
        let g = GaussLegendre::new(5).unwrap();
        assert!(g.nodes()[2].abs() < 1e-15);
        assert!((g.weights()[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn composite_integrates_kink() {
        let g = GaussLegendre::new(4).unwrap();
        let pts = g.composite(&breakpoints(-1.0, 1.0, &[0.3]), 2);
        let v: f64 = pts.iter().map(|(x, w)| w * (x - 0.3).abs()).sum();
        assert!((v - (1.3f64.powi(2) + 0.7f64.powi(2)) / 2.0).abs() < 1e-14);
    }
}
