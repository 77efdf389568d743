//! Gauss-Legendre quadrature rules on the reference interval `[-1, 1]`.
//!
//! Nodes are the roots of the Legendre polynomial `P_Q`, found by Newton
//! iteration from Chebyshev initial guesses; weights follow from the
//! derivative at each root. A rule with `Q` points integrates polynomials
//! of degree `2Q - 1` exactly.

use std::collections::BTreeMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

/// Largest supported point count.
pub const MAX_POINTS: usize = 32;

/// A Gauss-Legendre rule: strictly increasing nodes in `(-1, 1)` and
/// positive weights summing to 2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Number of points `Q`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Approximate `∫_{-1}^{1} f dξ` with this rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Evaluate `P_n(x)` and its derivative by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

fn compute_rule(q: usize) -> QuadratureRule {
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    // Solve for the roots in the lower half; mirror the rest.
    for i in 0..(q + 1) / 2 {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(q, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(q, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = x;
        weights[i] = w;
        nodes[q - 1 - i] = -x;
        weights[q - 1 - i] = w;
    }
    if q % 2 == 1 {
        // The middle root is exactly zero by symmetry.
        nodes[q / 2] = 0.0;
        let (_, dp) = legendre_with_derivative(q, 0.0);
        weights[q / 2] = 2.0 / (dp * dp);
    }
    QuadratureRule { nodes, weights }
}

fn cache() -> &'static Mutex<BTreeMap<usize, QuadratureRule>> {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, QuadratureRule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(BTreeMap::new()))
}

/// Build (or fetch from cache) the `Q`-point Gauss-Legendre rule.
///
/// Supported range is `1 ..= 32`; anything else is an invalid argument.
pub fn gauss_legendre(q: usize) -> Result<QuadratureRule> {
    if q == 0 || q > MAX_POINTS {
        return Err(Error::invalid(format!(
            "quadrature point count must be in 1..={MAX_POINTS}, got {q}"
        )));
    }
    let mut cache = cache().lock().unwrap();
    Ok(cache.entry(q).or_insert_with(|| compute_rule(q)).clone())
}

/// Minimum number of Gauss points integrating a degree-`p` polynomial
/// exactly: `q >= (p + 1) / 2`, rounded up.
pub fn min_points_for_degree(p: usize) -> usize {
    ((p + 1) + 1) / 2
}
