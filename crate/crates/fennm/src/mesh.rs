//! One-dimensional meshes: ordered elements, Jacobians, global quadrature
//! positions, and bisection-based local refinement.
//!
//! The mesh stores only its element boundaries; everything else (Jacobians,
//! quadrature positions) is derived from the affine map
//! `x = x_n + J_n (1 + ξ)` with `J_n = (x_{n+1} - x_n) / 2`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

/// An immutable 1D mesh over `[a, b]`; mutating operations return new meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    boundaries: Vec<f64>,
}

/// Global quadrature positions of one element.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementPoints {
    pub element: usize,
    pub positions: Vec<f64>,
    pub left: f64,
    pub right: f64,
}

impl Mesh {
    /// Build a mesh from explicit element boundaries (strictly increasing,
    /// at least two entries).
    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::invalid("mesh needs at least two boundaries"));
        }
        if boundaries.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("mesh boundaries must be finite"));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("mesh boundaries must be strictly increasing"));
        }
        Ok(Mesh { boundaries })
    }

    /// `n_elements` equal elements over `[a, b]`.
    pub fn uniform(a: f64, b: f64, n_elements: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!("domain [{a}, {b}] is not valid")));
        }
        if n_elements == 0 {
            return Err(Error::invalid("a mesh needs at least one element"));
        }
        let h = (b - a) / n_elements as f64;
        let mut boundaries: Vec<f64> = (0..=n_elements).map(|i| a + i as f64 * h).collect();
        // Pin the endpoints exactly.
        boundaries[0] = a;
        boundaries[n_elements] = b;
        Mesh::from_boundaries(boundaries)
    }

    pub fn n_elements(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.boundaries[0], *self.boundaries.last().unwrap())
    }

    /// `(x_n, x_{n+1})` of element `n`.
    pub fn element(&self, n: usize) -> (f64, f64) {
        (self.boundaries[n], self.boundaries[n + 1])
    }

    /// Half the element length.
    pub fn jacobian(&self, n: usize) -> f64 {
        let (l, r) = self.element(n);
        (r - l) / 2.0
    }

    /// Map a local coordinate `ξ ∈ [-1, 1]` of element `n` to global `x`.
    pub fn to_global(&self, n: usize, xi: f64) -> f64 {
        let (l, _) = self.element(n);
        l + self.jacobian(n) * (1.0 + xi)
    }

    /// Global quadrature positions for every element.
    pub fn element_points(&self, rule: &QuadratureRule) -> Vec<ElementPoints> {
        (0..self.n_elements())
            .map(|n| {
                let (left, right) = self.element(n);
                let positions = rule.nodes().iter().map(|&xi| self.to_global(n, xi)).collect();
                ElementPoints {
                    element: n,
                    positions,
                    left,
                    right,
                }
            })
            .collect()
    }

    /// Bisect every marked element; unmarked elements are unchanged.
    pub fn refine(&self, marks: &BTreeSet<usize>) -> Result<Mesh> {
        if let Some(&bad) = marks.iter().find(|&&m| m >= self.n_elements()) {
            return Err(Error::invalid(format!(
                "refine mark {bad} out of range for {} elements",
                self.n_elements()
            )));
        }
        let mut boundaries = Vec::with_capacity(self.boundaries.len() + marks.len());
        for n in 0..self.n_elements() {
            let (l, r) = self.element(n);
            boundaries.push(l);
            if marks.contains(&n) {
                boundaries.push(0.5 * (l + r));
            }
        }
        boundaries.push(self.domain().1);
        Mesh::from_boundaries(boundaries)
    }

    /// Merge each marked adjacent pair `(i, i+1)` into a single element.
    ///
    /// Pairs must be disjoint; overlapping pairs are rejected.
    pub fn coarsen(&self, pairs: &[(usize, usize)]) -> Result<Mesh> {
        let mut drop = BTreeSet::new();
        for &(i, j) in pairs {
            if j != i + 1 || j >= self.n_elements() {
                return Err(Error::invalid(format!(
                    "coarsen pair ({i}, {j}) is not an adjacent element pair"
                )));
            }
            // Dropping the shared boundary x_{i+1} merges the pair.
            if !drop.insert(i + 1) || drop.contains(&i) || drop.contains(&(j + 1)) {
                return Err(Error::invalid(format!("coarsen pair ({i}, {j}) overlaps another pair")));
            }
        }
        let boundaries = self
            .boundaries
            .iter()
            .enumerate()
            .filter(|(idx, _)| !drop.contains(idx))
            .map(|(_, &x)| x)
            .collect();
        Mesh::from_boundaries(boundaries)
    }

    /// Plain-text form: one boundary per line, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for x in &self.boundaries {
            out.push_str(&format!("{x:.16e}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Mesh> {
        let boundaries: Vec<f64> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| Error::invalid(format!("bad mesh line {l:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        Mesh::from_boundaries(boundaries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn marks(items: &[usize]) -> BTreeSet<usize> {
        items.iter().copied().collect()
    }

    #[test]
    fn uniform_five_elements_on_1_2() {
        let mesh = Mesh::uniform(1.0, 2.0, 5).unwrap();
        let expect = [1.0, 1.2, 1.4, 1.6, 1.8, 2.0];
        for (b, e) in mesh.boundaries().iter().zip(expect) {
            assert_abs_diff_eq!(*b, e, epsilon = 1e-15);
        }
        for n in 0..5 {
            assert_abs_diff_eq!(mesh.jacobian(n), 0.1, epsilon = 1e-15);
        }
        assert_eq!(mesh.element(4), (1.8, 2.0));
    }

    #[test]
    fn single_element_and_symmetric_domains() {
        let single = Mesh::uniform(0.0, 1.0, 1).unwrap();
        assert_eq!(single.n_elements(), 1);
        assert_abs_diff_eq!(single.jacobian(0), 0.5);
        let sym = Mesh::uniform(-1.0, 1.0, 4).unwrap();
        let expect = [-1.0, -0.5, 0.0, 0.5, 1.0];
        for (b, e) in sym.boundaries().iter().zip(expect) {
            assert_abs_diff_eq!(*b, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(Mesh::uniform(2.0, 1.0, 3).is_err());
        assert!(Mesh::uniform(1.0, 1.0, 3).is_err());
        assert!(Mesh::uniform(0.0, 1.0, 0).is_err());
        assert!(Mesh::from_boundaries(vec![0.0]).is_err());
        assert!(Mesh::from_boundaries(vec![0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn element_points_follow_affine_map() {
        let mesh = Mesh::uniform(1.0, 2.0, 5).unwrap();
        let one_point = gauss_legendre(1).unwrap();
        let pts = mesh.element_points(&one_point);
        assert_abs_diff_eq!(pts[0].positions[0], 1.1, epsilon = 1e-15);

        let unit = Mesh::uniform(0.0, 1.0, 1).unwrap();
        let two_point = gauss_legendre(2).unwrap();
        let pts = unit.element_points(&two_point);
        let offset = 0.5 / 3.0_f64.sqrt();
        assert_abs_diff_eq!(pts[0].positions[0], 0.5 - offset, epsilon = 1e-14);
        assert_abs_diff_eq!(pts[0].positions[1], 0.5 + offset, epsilon = 1e-14);

        // ξ = ∓1 maps to the element ends.
        assert_abs_diff_eq!(mesh.to_global(3, -1.0), 1.6, epsilon = 1e-15);
        assert_abs_diff_eq!(mesh.to_global(3, 1.0), 1.8, epsilon = 1e-15);
    }

    #[test]
    fn refine_bisects_marked_elements() {
        let mesh = Mesh::uniform(0.0, 1.0, 2).unwrap();
        let refined = mesh.refine(&marks(&[1])).unwrap();
        assert_eq!(refined.boundaries(), &[0.0, 0.5, 0.75, 1.0]);

        let same = mesh.refine(&marks(&[])).unwrap();
        assert_eq!(same, mesh);

        let wide = Mesh::uniform(-1.0, 1.0, 4).unwrap();
        let refined = wide.refine(&marks(&[1, 2])).unwrap();
        assert_eq!(refined.n_elements(), 6);
        assert_eq!(
            refined.boundaries(),
            &[-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0]
        );

        assert!(mesh.refine(&marks(&[2])).is_err());
    }

    #[test]
    fn coarsen_merges_pairs() {
        let mesh = Mesh::from_boundaries(vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let merged = mesh.coarsen(&[(0, 1)]).unwrap();
        assert_eq!(merged.boundaries(), &[0.0, 0.5, 1.0]);

        assert_eq!(mesh.coarsen(&[]).unwrap(), mesh);
        assert!(mesh.coarsen(&[(0, 1), (1, 2)]).is_err());
        assert!(mesh.coarsen(&[(0, 2)]).is_err());
        assert!(mesh.coarsen(&[(2, 3)]).is_err());
    }

    #[test]
    fn refine_then_coarsen_is_identity() {
        let mesh = Mesh::uniform(1.0, 2.0, 5).unwrap();
        let refined = mesh.refine(&marks(&[2])).unwrap();
        let back = refined.coarsen(&[(2, 3)]).unwrap();
        for (a, b) in back.boundaries().iter().zip(mesh.boundaries()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn text_round_trip() {
        let mesh = Mesh::from_boundaries(vec![0.0, 0.1 + 0.2, 0.7341298416874622, 1.0]).unwrap();
        let restored = Mesh::from_text(&mesh.to_text()).unwrap();
        for (a, b) in restored.boundaries().iter().zip(mesh.boundaries()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    proptest! {
        #[test]
        fn tiling_and_point_ordering(n in 1usize..12, q in 1usize..8, seed in 0u64..500) {
            // Pseudo-random non-uniform mesh on [0, 1].
            let mut bounds = vec![0.0];
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for i in 1..n {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let jitter = 0.3 * ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
                bounds.push((i as f64 + jitter) / n as f64);
            }
            bounds.push(1.0);
            let mesh = Mesh::from_boundaries(bounds).unwrap();
            let total: f64 = (0..mesh.n_elements()).map(|e| 2.0 * mesh.jacobian(e)).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);

            let rule = gauss_legendre(q).unwrap();
            let all: Vec<f64> = mesh
                .element_points(&rule)
                .iter()
                .flat_map(|ep| ep.positions.clone())
                .collect();
            for w in all.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            for ep in mesh.element_points(&rule) {
                for &x in &ep.positions {
                    prop_assert!(x > ep.left && x < ep.right);
                }
            }
        }

        #[test]
        fn refine_coarsen_round_trip(n in 1usize..10, mask in 0u32..1024) {
            let mesh = Mesh::uniform(-2.0, 3.0, n).unwrap();
            let marked: BTreeSet<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let refined = mesh.refine(&marked).unwrap();
            // Each mark shifts later sibling pairs right by one.
            let mut pairs = Vec::new();
            let mut offset = 0;
            for &m in &marked {
                pairs.push((m + offset, m + offset + 1));
                offset += 1;
            }
            let back = refined.coarsen(&pairs).unwrap();
            prop_assert_eq!(back.n_elements(), mesh.n_elements());
            for (a, b) in back.boundaries().iter().zip(mesh.boundaries()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }
}
