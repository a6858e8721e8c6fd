//! Discretized mixing prior over the unknown post-change parameter.
//!
//! The continuous prior F on J = (a, b) is represented by quadrature nodes
//! with weights proportional to (rule weight) × F'(node), renormalized to sum
//! to one. Gauss-Legendre nodes converge fast for the smooth positive
//! densities the theory assumes.

use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, map_rule};

/// Default node count for mixture grids.
pub const DEFAULT_NODES: usize = 33;

#[derive(Debug, Clone, serde::Serialize)]
pub struct PriorGrid {
    lower: f64,
    upper: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    density: Vec<f64>,
}

impl PriorGrid {
    /// Uniform prior on (lower, upper) under an m-point Gauss-Legendre rule.
    pub fn uniform_gauss_legendre(lower: f64, upper: f64, m: usize) -> Result<Self> {
        Self::gauss_legendre_with_density(lower, upper, m, |_| 1.0 / (upper - lower))
    }

    /// Arbitrary positive density F' on (lower, upper).
    pub fn gauss_legendre_with_density(
        lower: f64,
        upper: f64,
        m: usize,
        f_prime: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if !(lower < upper) {
            return Err(Error::InvalidConfig("prior interval is empty".into()));
        }
        if m < 1 {
            return Err(Error::InvalidConfig("prior grid needs ≥ 1 node".into()));
        }
        let (raw_nodes, raw_weights) = gauss_legendre(m);
        let (nodes, quad_weights) = map_rule(&raw_nodes, &raw_weights, lower, upper);
        let density: Vec<f64> = nodes.iter().map(|&t| f_prime(t)).collect();
        if density.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidConfig(
                "prior density must be positive and finite on the grid".into(),
            ));
        }
        let mut weights: Vec<f64> = quad_weights
            .iter()
            .zip(&density)
            .map(|(w, d)| w * d)
            .collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(PriorGrid {
            lower,
            upper,
            nodes,
            weights,
            log_weights,
            density,
        })
    }

    /// Point mass at θ (degenerate single-node grid).
    pub fn point(theta: f64) -> Self {
        PriorGrid {
            lower: theta,
            upper: theta,
            nodes: vec![theta],
            weights: vec![1.0],
            log_weights: vec![0.0],
            density: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// F'(θ) at the grid node nearest θ.
    pub fn density_near(&self, theta: f64) -> f64 {
        let mut best = 0usize;
        let mut dist = f64::INFINITY;
        for (i, t) in self.nodes.iter().enumerate() {
            let d = (t - theta).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        self.density[best]
    }

    /// The mixture construction assumes θ0 lies strictly below J.
    pub fn check_excludes_theta0(&self, theta0: f64) -> Result<()> {
        if theta0 >= self.lower {
            return Err(Error::InvalidConfig(format!(
                "θ0 = {theta0} must lie strictly below the prior support ({}, {})",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_grid_normalizes_and_orders() {
        let g = PriorGrid::uniform_gauss_legendre(0.5, 1.5, 33).unwrap();
        assert_eq!(g.len(), 33);
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for w in g.nodes().windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(g.nodes()[0] > 0.5 && g.nodes()[32] < 1.5);
        for d in g.density() {
            assert_abs_diff_eq!(*d, 1.0, epsilon = 1e-12);
        }
        assert!(g.check_excludes_theta0(0.0).is_ok());
        assert!(g.check_excludes_theta0(0.5).is_err());
    }

    #[test]
    fn weighted_density_shifts_mass() {
        // A density increasing in θ must put more weight on the upper half.
        let g = PriorGrid::gauss_legendre_with_density(0.0, 1.0, 16, |t| 1.0 + t).unwrap();
        let lower_mass: f64 = g
            .nodes()
            .iter()
            .zip(g.weights())
            .filter(|(t, _)| **t < 0.5)
            .map(|(_, w)| w)
            .sum();
        assert!(lower_mass < 0.5);
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn point_grid() {
        let g = PriorGrid::point(1.0);
        assert_eq!(g.len(), 1);
        assert_eq!(g.weights()[0], 1.0);
        assert_eq!(g.log_weights()[0], 0.0);
    }

    #[test]
    fn empty_interval_rejected() {
        assert!(PriorGrid::uniform_gauss_legendre(1.0, 1.0, 5).is_err());
        assert!(PriorGrid::uniform_gauss_legendre(2.0, 1.0, 5).is_err());
    }
}
