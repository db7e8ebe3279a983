use serde::{Deserialize, Serialize};

/// Cube `[lo, lo + side]^3` with `n` cells per axis and `(n + 1)^3` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDomain {
    pub n: usize,
    pub lo: [f64; 3],
    pub side: f64,
}

impl DiscreteDomain {
    /// The unit box `[0, 1]^3`.
    pub fn unit(n: usize) -> Self {
        DiscreteDomain { n, lo: [0.0; 3], side: 1.0 }
    }

    /// The unit box centred at the origin.
    pub fn centered(n: usize) -> Self {
        DiscreteDomain {
            n,
            lo: [-0.5; 3],
            side: 1.0,
        }
    }

    pub fn h(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn m(&self) -> usize {
        self.n + 1
    }

    pub fn len(&self) -> usize {
        self.m().pow(3)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.m() + j) * self.m() + k
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let m = self.m();
        [idx / (m * m), (idx / m) % m, idx % m]
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let ijk = self.unravel(idx);
        std::array::from_fn(|a| self.lo[a] + ijk[a] as f64 * self.h())
    }

    /// Number of coordinates of the node on the boundary (0 = interior).
    pub fn boundary_multiplicity(&self, idx: usize) -> usize {
        self.unravel(idx).iter().filter(|&&c| c == 0 || c == self.n).count()
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary_multiplicity(idx) > 0
    }

    /// Trapezoid weight `2^{-multiplicity}`.
    pub fn node_weight(&self, idx: usize) -> f64 {
        0.5f64.powi(self.boundary_multiplicity(idx) as i32)
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_boundary(i)).collect()
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_boundary(i)).collect()
    }

    /// Samples `f` at the boundary nodes in [`DiscreteDomain::boundary_indices`] order.
    pub fn boundary_trace<T, F: FnMut([f64; 3]) -> T>(&self, mut f: F) -> Vec<T> {
        self.boundary_indices().into_iter().map(|i| f(self.point(i))).collect()
    }

    pub fn node_values<T, F: FnMut([f64; 3]) -> T>(&self, mut f: F) -> Vec<T> {
        (0..self.len()).map(|i| f(self.point(i))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_weights() {
        let d = DiscreteDomain::unit(4);
        assert_eq!(d.len(), 125);
        assert_eq!(d.interior_indices().len(), 27);
        assert_eq!(d.boundary_indices().len(), 125 - 27);
        let total: f64 = (0..d.len()).map(|i| d.node_weight(i)).sum::<f64>() * d.h().powi(3);
        assert!((total - 1.0).abs() < 1e-14);
        assert_eq!(d.point(d.index(4, 0, 2)), [1.0, 0.0, 0.5]);
    }
}
