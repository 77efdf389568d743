//! Test function spaces on the reference element `[-1, 1]` and the
//! convolution filter banks built from them.
//!
//! A filter bank folds the quadrature weights into the test function (or
//! derivative) values at the Gauss nodes, so each per-element quadrature sum
//! becomes a dot product between a fixed filter row and a network-derived
//! signal sampled at the element's quadrature points.

use crate::error::{Error, Result};
use crate::quadrature::{min_points_for_degree, QuadratureRule};

/// Family of a test function space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Lagrange,
    HermiteCubic,
}

/// A set of `K` test functions with value, slope, and curvature evaluators
/// in local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionSpace {
    kind: SpaceKind,
    degree: usize,
    nodes: Vec<f64>,
}

/// Lagrange cardinal polynomials on `degree + 1` equispaced nodes.
pub fn lagrange_space(degree: usize) -> Result<TestFunctionSpace> {
    if !(1..=4).contains(&degree) {
        return Err(Error::invalid(format!(
            "Lagrange test space degree must be in 1..=4, got {degree}"
        )));
    }
    let nodes = (0..=degree)
        .map(|j| -1.0 + 2.0 * j as f64 / degree as f64)
        .collect();
    Ok(TestFunctionSpace {
        kind: SpaceKind::Lagrange,
        degree,
        nodes,
    })
}

/// The four cubic Hermite interpolators typical of beam elements: value and
/// slope cardinal functions at `ξ = -1` and `ξ = +1`.
pub fn hermite_cubic_space() -> TestFunctionSpace {
    TestFunctionSpace {
        kind: SpaceKind::HermiteCubic,
        degree: 3,
        nodes: vec![-1.0, 1.0],
    }
}

impl TestFunctionSpace {
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    /// Polynomial degree `p` of every member.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of test functions `K`.
    pub fn count(&self) -> usize {
        match self.kind {
            SpaceKind::Lagrange => self.degree + 1,
            SpaceKind::HermiteCubic => 4,
        }
    }

    /// `φ_k(ξ)`.
    pub fn value(&self, k: usize, xi: f64) -> f64 {
        match self.kind {
            SpaceKind::Lagrange => {
                let mut prod = 1.0;
                for (j, &nj) in self.nodes.iter().enumerate() {
                    if j != k {
                        prod *= (xi - nj) / (self.nodes[k] - nj);
                    }
                }
                prod
            }
            SpaceKind::HermiteCubic => match k {
                0 => (1.0 - xi).powi(2) * (2.0 + xi) / 4.0,
                1 => (1.0 - xi).powi(2) * (1.0 + xi) / 4.0,
                2 => (1.0 + xi).powi(2) * (2.0 - xi) / 4.0,
                3 => (1.0 + xi).powi(2) * (xi - 1.0) / 4.0,
                _ => panic!("Hermite cubic space has 4 functions, asked for {k}"),
            },
        }
    }

    /// `dφ_k/dξ`.
    pub fn deriv(&self, k: usize, xi: f64) -> f64 {
        match self.kind {
            SpaceKind::Lagrange => {
                let mut sum = 0.0;
                for (m, &nm) in self.nodes.iter().enumerate() {
                    if m == k {
                        continue;
                    }
                    let mut prod = 1.0 / (self.nodes[k] - nm);
                    for (j, &nj) in self.nodes.iter().enumerate() {
                        if j != k && j != m {
                            prod *= (xi - nj) / (self.nodes[k] - nj);
                        }
                    }
                    sum += prod;
                }
                sum
            }
            SpaceKind::HermiteCubic => match k {
                0 => -3.0 * (1.0 - xi * xi) / 4.0,
                1 => -(1.0 + 2.0 * xi - 3.0 * xi * xi) / 4.0,
                2 => 3.0 * (1.0 - xi * xi) / 4.0,
                3 => (3.0 * xi * xi + 2.0 * xi - 1.0) / 4.0,
                _ => panic!("Hermite cubic space has 4 functions, asked for {k}"),
            },
        }
    }

    /// `d²φ_k/dξ²`.
    pub fn deriv2(&self, k: usize, xi: f64) -> f64 {
        match self.kind {
            SpaceKind::Lagrange => {
                let mut sum = 0.0;
                for (m, &nm) in self.nodes.iter().enumerate() {
                    if m == k {
                        continue;
                    }
                    for (r, &nr) in self.nodes.iter().enumerate() {
                        if r == k || r == m {
                            continue;
                        }
                        let mut prod =
                            1.0 / ((self.nodes[k] - nm) * (self.nodes[k] - nr));
                        for (j, &nj) in self.nodes.iter().enumerate() {
                            if j != k && j != m && j != r {
                                prod *= (xi - nj) / (self.nodes[k] - nj);
                            }
                        }
                        sum += prod;
                    }
                }
                sum
            }
            SpaceKind::HermiteCubic => match k {
                0 => 1.5 * xi,
                1 => (3.0 * xi - 1.0) / 2.0,
                2 => -1.5 * xi,
                3 => (3.0 * xi + 1.0) / 2.0,
                _ => panic!("Hermite cubic space has 4 functions, asked for {k}"),
            },
        }
    }
}

/// How the quadrature order relates to the test space degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureAdequacy {
    /// `Q < ceil((p+1)/2)`: even the test polynomials are under-integrated.
    BelowMinimum,
    /// `Q` exactly meets the minimum: the test space integrates exactly but
    /// there is no headroom for forcing terms or the network signal.
    MarginalForForcing,
    Adequate,
}

/// Precomputed `K×Q` filter matrices plus boundary traces of the space.
///
/// `filters_value[k][q] = W_q φ_k(ξ_q)`, `filters_dxi` and `filters_dxixi`
/// hold the first- and second-derivative counterparts. `boundary_values[k]`
/// is `[φ_k(-1), φ_k(+1)]` and `boundary_dxi[k]` the slopes there.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub space: TestFunctionSpace,
    pub rule: QuadratureRule,
    pub filters_value: Vec<Vec<f64>>,
    pub filters_dxi: Vec<Vec<f64>>,
    pub filters_dxixi: Vec<Vec<f64>>,
    pub boundary_values: Vec<[f64; 2]>,
    pub boundary_dxi: Vec<[f64; 2]>,
    adequacy: QuadratureAdequacy,
}

/// Evaluate all five filter matrices pointwise.
///
/// A rule below `min_points_for_degree(p)` is not an error: the bank is
/// still built, with the shortfall recorded in [`FilterBank::adequacy`]
/// (quadrature-saturation studies sweep `Q` through that regime on purpose).
pub fn build_filter_bank(space: &TestFunctionSpace, rule: &QuadratureRule) -> FilterBank {
    let k_count = space.count();
    let q_count = rule.len();
    let mut filters_value = vec![vec![0.0; q_count]; k_count];
    let mut filters_dxi = vec![vec![0.0; q_count]; k_count];
    let mut filters_dxixi = vec![vec![0.0; q_count]; k_count];
    let mut boundary_values = vec![[0.0; 2]; k_count];
    let mut boundary_dxi = vec![[0.0; 2]; k_count];
    for k in 0..k_count {
        for q in 0..q_count {
            let xi = rule.nodes()[q];
            let w = rule.weights()[q];
            filters_value[k][q] = w * space.value(k, xi);
            filters_dxi[k][q] = w * space.deriv(k, xi);
            filters_dxixi[k][q] = w * space.deriv2(k, xi);
        }
        boundary_values[k] = [space.value(k, -1.0), space.value(k, 1.0)];
        boundary_dxi[k] = [space.deriv(k, -1.0), space.deriv(k, 1.0)];
    }
    let min_q = min_points_for_degree(space.degree());
    let adequacy = if q_count < min_q {
        QuadratureAdequacy::BelowMinimum
    } else if q_count == min_q {
        QuadratureAdequacy::MarginalForForcing
    } else {
        QuadratureAdequacy::Adequate
    };
    FilterBank {
        space: space.clone(),
        rule: rule.clone(),
        filters_value,
        filters_dxi,
        filters_dxixi,
        boundary_values,
        boundary_dxi,
        adequacy,
    }
}

impl FilterBank {
    pub fn count(&self) -> usize {
        self.space.count()
    }

    pub fn points(&self) -> usize {
        self.rule.len()
    }

    pub fn adequacy(&self) -> QuadratureAdequacy {
        self.adequacy
    }

    /// True when the bank carries a degraded-accuracy note.
    pub fn degraded(&self) -> bool {
        self.adequacy != QuadratureAdequacy::Adequate
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_space_cardinal_values() {
        let space = lagrange_space(1).unwrap();
        assert_eq!(space.count(), 2);
        // φ_1(ξ) = (1-ξ)/2
        assert_abs_diff_eq!(space.value(0, -1.0), 1.0);
        assert_abs_diff_eq!(space.value(0, 1.0), 0.0);
        assert_abs_diff_eq!(space.value(0, 0.2), 0.4);
        assert_abs_diff_eq!(space.deriv(0, 0.7), -0.5);
    }

    #[test]
    fn quadratic_space_center_bump() {
        let space = lagrange_space(2).unwrap();
        // φ_2 is the bump at ξ=0: 1 - ξ²
        assert_abs_diff_eq!(space.value(1, 0.0), 1.0);
        assert_abs_diff_eq!(space.value(1, -1.0), 0.0);
        assert_abs_diff_eq!(space.value(1, 1.0), 0.0);
        assert_abs_diff_eq!(space.value(1, 0.5), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn lagrange_cardinality_and_partition_of_unity() {
        for p in 1..=4 {
            let space = lagrange_space(p).unwrap();
            for k in 0..space.count() {
                for (j, &nj) in space.nodes.iter().enumerate() {
                    let expect = if j == k { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(space.value(k, nj), expect, epsilon = 1e-13);
                }
            }
            for xi in [-1.0, -0.63, 0.0, 0.3, 0.99, 1.0] {
                let total: f64 = (0..space.count()).map(|k| space.value(k, xi)).sum();
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
                let slope: f64 = (0..space.count()).map(|k| space.deriv(k, xi)).sum();
                assert_abs_diff_eq!(slope, 0.0, epsilon = 1e-13);
            }
            // Nonvanishing boundary values in each column.
            assert!((0..space.count()).any(|k| space.value(k, -1.0).abs() > 0.5));
            assert!((0..space.count()).any(|k| space.value(k, 1.0).abs() > 0.5));
        }
    }

    #[test]
    fn lagrange_derivatives_match_finite_differences() {
        let h = 1e-6;
        for p in 1..=4 {
            let space = lagrange_space(p).unwrap();
            for k in 0..space.count() {
                for xi in [-0.9, -0.5, 0.0, 0.31, 0.8] {
                    let fd = (space.value(k, xi + h) - space.value(k, xi - h)) / (2.0 * h);
                    assert_abs_diff_eq!(space.deriv(k, xi), fd, epsilon = 1e-7);
                    let fd2 = (space.deriv(k, xi + h) - space.deriv(k, xi - h)) / (2.0 * h);
                    assert_abs_diff_eq!(space.deriv2(k, xi), fd2, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn hermite_cardinality() {
        let space = hermite_cubic_space();
        assert_eq!(space.count(), 4);
        // Value-type at the left node.
        assert_abs_diff_eq!(space.value(0, -1.0), 1.0);
        assert_abs_diff_eq!(space.deriv(0, -1.0), 0.0);
        assert_abs_diff_eq!(space.value(0, 1.0), 0.0);
        assert_abs_diff_eq!(space.deriv(0, 1.0), 0.0);
        assert_abs_diff_eq!(space.value(0, 0.0), 0.5);
        // Slope-type at the left node.
        assert_abs_diff_eq!(space.deriv(1, -1.0), 1.0);
        assert_abs_diff_eq!(space.value(1, -1.0), 0.0);
        assert_abs_diff_eq!(space.value(1, 1.0), 0.0);
        assert_abs_diff_eq!(space.deriv(1, 1.0), 0.0);
        // Right-node pair.
        assert_abs_diff_eq!(space.value(2, 1.0), 1.0);
        assert_abs_diff_eq!(space.deriv(2, 1.0), 0.0);
        assert_abs_diff_eq!(space.deriv(3, 1.0), 1.0);
        assert_abs_diff_eq!(space.value(3, 1.0), 0.0);
        assert_abs_diff_eq!(space.value(3, -1.0), 0.0);
    }

    #[test]
    fn hermite_derivatives_match_finite_differences() {
        let space = hermite_cubic_space();
        let h = 1e-6;
        for k in 0..4 {
            for xi in [-0.8, -0.2, 0.4, 0.9] {
                let fd = (space.value(k, xi + h) - space.value(k, xi - h)) / (2.0 * h);
                assert_abs_diff_eq!(space.deriv(k, xi), fd, epsilon = 1e-8);
                let fd2 = (space.deriv(k, xi + h) - space.deriv(k, xi - h)) / (2.0 * h);
                assert_abs_diff_eq!(space.deriv2(k, xi), fd2, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn rejects_unsupported_degrees() {
        assert!(lagrange_space(0).is_err());
        assert!(lagrange_space(5).is_err());
    }

    #[test]
    fn linear_bank_rows() {
        let space = lagrange_space(1).unwrap();
        let rule = gauss_legendre(2).unwrap();
        let bank = build_filter_bank(&space, &rule);
        // dφ_1/dξ ≡ -1/2 with unit weights.
        assert_abs_diff_eq!(bank.filters_dxi[0][0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(bank.filters_dxi[0][1], -0.5, epsilon = 1e-15);
        // Row sum of the value filter is ∫ (1-ξ)/2 dξ = 1.
        let row: f64 = bank.filters_value[0].iter().sum();
        assert_abs_diff_eq!(row, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn filter_row_sums_match_integrals() {
        let reference = gauss_legendre(20).unwrap();
        let spaces: Vec<TestFunctionSpace> = (1..=4)
            .map(|p| lagrange_space(p).unwrap())
            .chain(std::iter::once(hermite_cubic_space()))
            .collect();
        for space in &spaces {
            let min_q = min_points_for_degree(space.degree());
            for q in min_q..=12 {
                let rule = gauss_legendre(q).unwrap();
                let bank = build_filter_bank(&space.clone(), &rule);
                for k in 0..space.count() {
                    let value_sum: f64 = bank.filters_value[k].iter().sum();
                    let exact = reference.integrate(|xi| space.value(k, xi));
                    assert_abs_diff_eq!(value_sum, exact, epsilon = 1e-12);
                    let dxi_sum: f64 = bank.filters_dxi[k].iter().sum();
                    let jump = space.value(k, 1.0) - space.value(k, -1.0);
                    assert_abs_diff_eq!(dxi_sum, jump, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn quadrature_adequacy_thresholds() {
        let quartic = lagrange_space(4).unwrap();
        let below = build_filter_bank(&quartic, &gauss_legendre(2).unwrap());
        assert_eq!(below.adequacy(), QuadratureAdequacy::BelowMinimum);
        assert!(below.degraded());
        let marginal = build_filter_bank(&quartic, &gauss_legendre(3).unwrap());
        assert_eq!(marginal.adequacy(), QuadratureAdequacy::MarginalForForcing);
        assert!(marginal.degraded());
        let fine = build_filter_bank(&quartic, &gauss_legendre(10).unwrap());
        assert_eq!(fine.adequacy(), QuadratureAdequacy::Adequate);
        assert!(!fine.degraded());
    }

    #[test]
    fn filtered_quadrature_is_exact_for_low_degree_products() {
        // Σ_q filters_value[k][q] g(ξ_q) = ∫ φ_k g dξ whenever deg(φ_k g) ≤ 2Q-1.
        let reference = gauss_legendre(24).unwrap();
        for p in 1..=4usize {
            let space = lagrange_space(p).unwrap();
            for q in min_points_for_degree(p)..=8 {
                let rule = gauss_legendre(q).unwrap();
                let bank = build_filter_bank(&space, &rule);
                let g_degree_max = 2 * q - 1 - p;
                for g_deg in 0..=g_degree_max.min(6) {
                    for k in 0..space.count() {
                        let filtered: f64 = bank.filters_value[k]
                            .iter()
                            .zip(rule.nodes())
                            .map(|(f, &xi)| f * xi.powi(g_deg as i32))
                            .sum();
                        let exact = reference
                            .integrate(|xi| space.value(k, xi) * xi.powi(g_deg as i32));
                        assert_abs_diff_eq!(filtered, exact, epsilon = 1e-12);
                    }
                }
            }
        }
    }
}
