//! Minimal reverse-mode tape for scalars assembled from network jets.
//!
//! The weak-form losses are scalar compositions of jet entries (values and
//! input-derivatives of the network at fixed points). Building them on this
//! tape yields the exact sensitivity of the loss with respect to every jet
//! entry, which the network then pulls back to its parameters.

use std::cell::RefCell;

#[derive(Debug, Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Append-only record of scalar operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A scalar tied to a [`Tape`]. Copyable; arithmetic records the operation.
#[derive(Debug, Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all recorded nodes, keeping capacity.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
    }

    /// Register an independent scalar.
    pub fn leaf(&self, val: f64) -> Var<'_> {
        let idx = self.push(Node {
            parents: [0, 0],
            partials: [0.0, 0.0],
        });
        Var {
            tape: self,
            idx,
            val,
        }
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(node);
        idx
    }

    /// Reverse sweep from `output`; returns the adjoint of every node.
    pub fn gradient(&self, output: Var<'_>) -> Adjoints {
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        adjoints[output.idx as usize] = 1.0;
        for i in (0..nodes.len()).rev() {
            let a = adjoints[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for s in 0..2 {
                let p = node.parents[s] as usize;
                if p != i {
                    adjoints[p] += a * node.partials[s];
                }
            }
        }
        Adjoints { adjoints }
    }
}

/// Adjoints of every tape node with respect to one output.
pub struct Adjoints {
    adjoints: Vec<f64>,
}

impl Adjoints {
    pub fn wrt(&self, var: Var<'_>) -> f64 {
        self.adjoints[var.idx as usize]
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }

    fn unary(self, val: f64, partial: f64) -> Var<'t> {
        let idx = self.tape.push(Node {
            parents: [self.idx, self.idx],
            partials: [partial, 0.0],
        });
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    fn binary(self, rhs: Var<'t>, val: f64, dl: f64, dr: f64) -> Var<'t> {
        let idx = self.tape.push(Node {
            parents: [self.idx, rhs.idx],
            partials: [dl, dr],
        });
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    pub fn sin(self) -> Var<'t> {
        self.unary(self.val.sin(), self.val.cos())
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(self.val.cos(), -self.val.sin())
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn exp(self) -> Var<'t> {
        let e = self.val.exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    pub fn sqrt(self) -> Var<'t> {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }

    pub fn powi(self, n: i32) -> Var<'t> {
        self.unary(
            self.val.powi(n),
            n as f64 * self.val.powi(n - 1),
        )
    }

    pub fn square(self) -> Var<'t> {
        self.unary(self.val * self.val, 2.0 * self.val)
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(
            rhs,
            self.val / rhs.val,
            1.0 / rhs.val,
            -self.val / (rhs.val * rhs.val),
        )
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> std::ops::Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.val + rhs, 1.0)
    }
}

impl<'t> std::ops::Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.val - rhs, 1.0)
    }
}

impl<'t> std::ops::Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.val * rhs, rhs)
    }
}

impl<'t> std::ops::Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> std::ops::Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(self - rhs.val, -1.0)
    }
}

impl<'t> std::ops::Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.leaf(3.0);
        let y = tape.leaf(-2.0);
        let z = x * y + x.square();
        assert_abs_diff_eq!(z.value(), -6.0 + 9.0);
        let g = tape.gradient(z);
        assert_abs_diff_eq!(g.wrt(x), -2.0 + 6.0);
        assert_abs_diff_eq!(g.wrt(y), 3.0);
    }

    #[test]
    fn chain_through_transcendentals() {
        let tape = Tape::new();
        let x = tape.leaf(0.7);
        let z = (x.sin() * 2.0 + x.tanh()).exp();
        let g = tape.gradient(z);
        let v = 0.7_f64;
        let expect = (v.sin() * 2.0 + v.tanh()).exp() * (2.0 * v.cos() + 1.0 / v.cosh().powi(2));
        assert_abs_diff_eq!(g.wrt(x), expect, epsilon = 1e-14);
    }

    #[test]
    fn division_and_mixed_scalars() {
        let tape = Tape::new();
        let x = tape.leaf(2.0);
        let y = tape.leaf(5.0);
        let z = (1.0 - x / y) * 3.0 + (4.0 * x - 1.0);
        assert_abs_diff_eq!(z.value(), (1.0 - 0.4) * 3.0 + 7.0);
        let g = tape.gradient(z);
        assert_abs_diff_eq!(g.wrt(x), -3.0 / 5.0 + 4.0);
        assert_abs_diff_eq!(g.wrt(y), 3.0 * 2.0 / 25.0);
    }

    #[test]
    fn clear_reuses_storage() {
        let tape = Tape::new();
        let x = tape.leaf(1.0);
        let _ = x.square();
        assert_eq!(tape.len(), 2);
        tape.clear();
        assert!(tape.is_empty());
        let y = tape.leaf(4.0);
        let z = y.sqrt();
        let g = tape.gradient(z);
        assert_abs_diff_eq!(g.wrt(y), 0.25);
    }
}
