//! Gauss-Legendre grids on finite intervals.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Nodes per panel of a composite rule.
pub const PANEL_NODES: usize = 16;

#[derive(Clone, Debug)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    /// Single Gauss-Legendre rule with `n` nodes on `[lo, hi]`.
    pub fn gauss_legendre(lo: f64, hi: f64, n: usize) -> Self {
        let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (mid + half * x, half * w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Composite rule: `ceil(n / PANEL_NODES)` equal panels of `PANEL_NODES`
    /// nodes each.
    pub fn composite(lo: f64, hi: f64, n: usize) -> Self {
        let panels = n.div_ceil(PANEL_NODES).max(1);
        let width = (hi - lo) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * PANEL_NODES);
        let mut weights = Vec::with_capacity(panels * PANEL_NODES);
        for p in 0..panels {
            let a = lo + width * p as f64;
            let g = Self::gauss_legendre(a, a + width, PANEL_NODES);
            nodes.extend(g.nodes);
            weights.extend(g.weights);
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exactness() {
        let g = Grid::gauss_legendre(-1.0, 2.0, 5);
        // degree 9 is exact for 5 nodes
        let v = g.integrate(|x| x.powi(9));
        assert!((v - (2f64.powi(10) - 1.0) / 10.0).abs() < 1e-11);
    }

    #[test]
    fn composite_gaussian() {
        let g = Grid::composite(-12.0, 12.0, 64);
        assert_eq!(g.len(), 64);
        let v = g.integrate(|x| (-x * x / 2.0).exp());
        assert!((v - (2.0 * PI).sqrt()).abs() < 1e-13);
    }
}
