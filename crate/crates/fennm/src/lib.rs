//! Finite element neural network method (FENNM) for one-dimensional
//! differential equations.
//!
//! A single global neural network provides the trial solution while local
//! Lagrange or Hermite test functions weight the weak-form residual of the
//! governing equation element by element. Quadrature weights and test
//! function values are folded into precomputed filter banks that turn the
//! per-element Gauss sums into strided dot products over network-derived
//! signals, with explicit flux brackets carrying natural boundary conditions
//! and inter-element coupling.
//!
//! Crate layout:
//! - [`quadrature`]: Gauss-Legendre rules on `[-1, 1]`.
//! - [`basis`]: test function spaces and filter banks.
//! - [`mesh`]: 1D meshes, local-to-global maps, bisection refinement.
//! - [`diffnet`]: dense network with Taylor-jet input derivatives up to
//!   third order and exact parameter gradients of jet-built scalars.
//! - [`weakform`]: element residuals, residual/boundary losses, penalties.
//! - [`optim`]: ADAM, L-BFGS, and the two-phase training protocol.
//! - [`problems`]: the built-in case studies with oracle solutions.
//! - [`baselines`]: classical Galerkin FEM, RK45, and FDM oracles.
//! - [`harness`]: experiment driver, sweeps, refinement loop, reports.

pub mod baselines;
pub mod basis;
pub mod diffnet;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod optim;
pub mod problems;
pub mod quadrature;
pub mod weakform;

pub use basis::{FilterBank, TestFunctionSpace};
pub use diffnet::{Activation, DiffNet, JetBatch, NetConfig};
pub use error::{Error, Result};
pub use mesh::{ElementPoints, Mesh};
pub use quadrature::QuadratureRule;
