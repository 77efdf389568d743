//! Weak-form residual assembly: flux brackets, filtered quadrature sums,
//! boundary loss, and the self-adaptive penalty protocol.
//!
//! Each element contributes `K` residual entries of the shape
//!
//! ```text
//! r_k = Σ_f  c_f J^p_f [ w_k(+1) F_f(right) - w_k(-1) F_f(left) ]
//!     + Σ_v  c_v J^p_v Σ_q filter_v[k][q] g_v(x_q, jets)
//! ```
//!
//! where the flux signals `F` and integrands `g` are small coefficient-times-
//! jet expressions and the filters fold quadrature weights into test function
//! (derivative) values. Natural boundary conditions substitute known values
//! for flux signals at specific element boundaries. The same recipe is
//! evaluated either on plain floats (assessment) or on the reverse-mode tape
//! (training), so value and gradient never diverge.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::basis::FilterBank;
use crate::diffnet::tape::{Tape, Var};
use crate::diffnet::DiffNet;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Coefficient function of the global coordinate.
pub type CoeffFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Jet-dependent factor of one signal term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JetFactor {
    /// Constant 1: the term depends on `x` only (forcing).
    One,
    /// `u^(m)` for `m = 0..=3`.
    Deriv(usize),
    /// `sin(u)`: the pendulum's restoring term.
    SinValue,
}

impl JetFactor {
    fn max_order(self) -> usize {
        match self {
            JetFactor::One => 0,
            JetFactor::Deriv(m) => m,
            JetFactor::SinValue => 0,
        }
    }
}

/// One additive term `coeff(x) · factor(jet)`.
#[derive(Clone)]
pub struct SignalTerm {
    pub coeff: CoeffFn,
    pub factor: JetFactor,
}

/// A network-derived field evaluated at quadrature points or element
/// boundaries: a short sum of coefficient-times-jet terms.
#[derive(Clone)]
pub struct Signal {
    terms: Vec<SignalTerm>,
}

pub fn const_coeff(c: f64) -> CoeffFn {
    Arc::new(move |_| c)
}

impl Signal {
    pub fn new(terms: Vec<SignalTerm>) -> Self {
        Signal { terms }
    }

    /// `c · u^(m)`.
    pub fn scaled_deriv(c: f64, order: usize) -> Self {
        Signal::new(vec![SignalTerm {
            coeff: const_coeff(c),
            factor: JetFactor::Deriv(order),
        }])
    }

    /// `u^(m)`.
    pub fn deriv(order: usize) -> Self {
        Signal::scaled_deriv(1.0, order)
    }

    /// `x · u^(m)`.
    pub fn x_times_deriv(order: usize) -> Self {
        Signal::new(vec![SignalTerm {
            coeff: Arc::new(|x| x),
            factor: JetFactor::Deriv(order),
        }])
    }

    /// Pure forcing `f(x)`.
    pub fn forcing(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Signal::new(vec![SignalTerm {
            coeff: Arc::new(f),
            factor: JetFactor::One,
        }])
    }

    /// Append another term.
    pub fn plus(mut self, term: SignalTerm) -> Self {
        self.terms.push(term);
        self
    }

    /// Highest jet order the signal consumes.
    pub fn max_order(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.factor.max_order())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: f64, jet: &[f64; 4]) -> f64 {
        let mut acc = 0.0;
        for term in &self.terms {
            let c = (term.coeff)(x);
            acc += match term.factor {
                JetFactor::One => c,
                JetFactor::Deriv(m) => c * jet[m],
                JetFactor::SinValue => c * jet[0].sin(),
            };
        }
        acc
    }

    /// Tape evaluation; `jet` maps a derivative order to its leaf.
    fn eval_var<'t>(&self, tape: &'t Tape, x: f64, jet: &dyn Fn(usize) -> Var<'t>) -> Var<'t> {
        let mut constant = 0.0;
        let mut acc: Option<Var<'t>> = None;
        for term in &self.terms {
            let c = (term.coeff)(x);
            let var = match term.factor {
                JetFactor::One => {
                    constant += c;
                    continue;
                }
                JetFactor::Deriv(m) => jet(m) * c,
                JetFactor::SinValue => jet(0).sin() * c,
            };
            acc = Some(match acc {
                Some(a) => a + var,
                None => var,
            });
        }
        match acc {
            Some(a) if constant != 0.0 => a + constant,
            Some(a) => a,
            None => tape.leaf(constant),
        }
    }
}

/// Which trace of the test functions weights a flux bracket.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryWeight {
    /// `φ_k(∓1)`.
    Value,
    /// `dφ_k/dξ(∓1)`.
    Slope,
}

/// Which filter matrix a volume term contracts against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterKind {
    Value,
    DXi,
    DXiXi,
}

/// Element side selector for flux overrides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

/// Replace a flux signal with a known value at one element boundary:
/// `Right` targets the element ending at `position`, `Left` the element
/// starting there. This is how natural boundary conditions enter.
#[derive(Clone, Copy, Debug)]
pub struct FluxOverride {
    pub position: f64,
    pub side: Side,
    pub value: f64,
}

/// One flux bracket `scale · J^p [ w_k F ]_{left}^{right}`.
#[derive(Clone)]
pub struct FluxTerm {
    pub scale: f64,
    pub signal: Signal,
    pub weight: BoundaryWeight,
    pub jacobian_power: i32,
    pub overrides: Vec<FluxOverride>,
}

/// One filtered quadrature sum `scale · J^p Σ_q filter[k][q] g(x_q)`.
#[derive(Clone)]
pub struct VolumeTerm {
    pub scale: f64,
    pub integrand: Signal,
    pub filter: FilterKind,
    pub jacobian_power: i32,
}

/// The weak-form recipe of one problem: flux brackets plus volume terms,
/// with the sign pattern and Jacobian powers of its governing equation.
#[derive(Clone)]
pub struct SignalSpec {
    pub fluxes: Vec<FluxTerm>,
    pub volumes: Vec<VolumeTerm>,
    max_jet_order: usize,
}

impl SignalSpec {
    pub fn new(fluxes: Vec<FluxTerm>, volumes: Vec<VolumeTerm>) -> Self {
        let max_jet_order = fluxes
            .iter()
            .map(|f| f.signal.max_order())
            .chain(volumes.iter().map(|v| v.integrand.max_order()))
            .max()
            .unwrap_or(0);
        SignalSpec {
            fluxes,
            volumes,
            max_jet_order,
        }
    }

    /// Highest jet order any term consumes.
    pub fn max_jet_order(&self) -> usize {
        self.max_jet_order
    }
}

/// An essential (Dirichlet or zeroth/first-order initial) condition
/// `u^(order)(position) = value`, enforced through the boundary loss.
#[derive(Clone, Copy, Debug)]
pub struct EssentialBc {
    pub position: f64,
    pub order: usize,
    pub value: f64,
}

/// Value and derivatives of the trial solution at one point.
#[derive(Clone, Copy, Debug)]
pub struct JetPoint {
    pub x: f64,
    pub jet: [f64; 4],
    pub order: usize,
}

/// Per-element residual entries, one per test function.
///
/// `overrides[t]` carries the resolved `[left, right]` flux substitutions of
/// flux term `t` for this element.
pub fn element_residual(
    bank: &FilterBank,
    spec: &SignalSpec,
    jacobian: f64,
    quad_jets: &[JetPoint],
    left: &JetPoint,
    right: &JetPoint,
    overrides: &[[Option<f64>; 2]],
) -> Result<Vec<f64>> {
    let q_count = bank.points();
    let k_count = bank.count();
    if quad_jets.len() != q_count {
        return Err(Error::invalid(format!(
            "expected {q_count} quadrature jets, got {}",
            quad_jets.len()
        )));
    }
    let need = spec.max_jet_order();
    if left.order < need || right.order < need {
        return Err(Error::invalid(
            "boundary jets are missing required derivative orders",
        ));
    }
    if quad_jets.iter().any(|j| j.order < need) {
        return Err(Error::invalid(
            "quadrature jets are missing required derivative orders",
        ));
    }
    if overrides.len() != spec.fluxes.len() {
        return Err(Error::invalid("one override slot per flux term is required"));
    }

    let mut residual = vec![0.0; k_count];
    for (t, flux) in spec.fluxes.iter().enumerate() {
        let f_left = overrides[t][0].unwrap_or_else(|| flux.signal.eval(left.x, &left.jet));
        let f_right = overrides[t][1].unwrap_or_else(|| flux.signal.eval(right.x, &right.jet));
        let scale = flux.scale * jacobian.powi(flux.jacobian_power);
        for (k, r) in residual.iter_mut().enumerate() {
            let (w_l, w_r) = match flux.weight {
                BoundaryWeight::Value => {
                    (bank.boundary_values[k][0], bank.boundary_values[k][1])
                }
                BoundaryWeight::Slope => (bank.boundary_dxi[k][0], bank.boundary_dxi[k][1]),
            };
            *r += scale * (w_r * f_right - w_l * f_left);
        }
    }
    for volume in &spec.volumes {
        let scale = volume.scale * jacobian.powi(volume.jacobian_power);
        let filter = match volume.filter {
            FilterKind::Value => &bank.filters_value,
            FilterKind::DXi => &bank.filters_dxi,
            FilterKind::DXiXi => &bank.filters_dxixi,
        };
        for (k, r) in residual.iter_mut().enumerate() {
            let mut sum = 0.0;
            for (q, jet) in quad_jets.iter().enumerate() {
                sum += filter[k][q] * volume.integrand.eval(jet.x, &jet.jet);
            }
            *r += scale * sum;
        }
    }
    Ok(residual)
}

/// Mean of the squared entries over all elements and test functions.
pub fn mean_of_squares(residuals: &[Vec<f64>]) -> f64 {
    let count: usize = residuals.iter().map(Vec::len).sum();
    if count == 0 {
        return 0.0;
    }
    let sum: f64 = residuals.iter().flatten().map(|r| r * r).sum();
    sum / count as f64
}

/// A weak form bound to a concrete mesh and filter bank: resolved flux
/// overrides, the evaluation point layout, and shared boundary signals.
pub struct Assembly<'a> {
    pub mesh: &'a Mesh,
    pub bank: &'a FilterBank,
    pub spec: &'a SignalSpec,
    /// Per flux term: `(element, side) → substituted value`.
    resolved: Vec<BTreeMap<(usize, Side), f64>>,
    /// All quadrature points (element-major) followed by the `N_el + 1`
    /// element boundaries.
    points: Vec<f64>,
}

fn position_matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

impl<'a> Assembly<'a> {
    pub fn new(mesh: &'a Mesh, bank: &'a FilterBank, spec: &'a SignalSpec) -> Result<Self> {
        let bounds = mesh.boundaries();
        let mut resolved = Vec::with_capacity(spec.fluxes.len());
        for flux in &spec.fluxes {
            let mut map = BTreeMap::new();
            for ov in &flux.overrides {
                let slot = match ov.side {
                    // The element ending at the position.
                    Side::Right => bounds[1..]
                        .iter()
                        .position(|&b| position_matches(b, ov.position))
                        .map(|n| (n, Side::Right)),
                    // The element starting at the position.
                    Side::Left => bounds[..bounds.len() - 1]
                        .iter()
                        .position(|&b| position_matches(b, ov.position))
                        .map(|n| (n, Side::Left)),
                };
                let slot = slot.ok_or_else(|| {
                    Error::invalid(format!(
                        "flux override at {} ({:?} side) does not land on an element boundary",
                        ov.position, ov.side
                    ))
                })?;
                map.insert(slot, ov.value);
            }
            resolved.push(map);
        }
        let mut points = Vec::with_capacity(mesh.n_elements() * bank.points() + bounds.len());
        for ep in mesh.element_points(&bank.rule) {
            points.extend_from_slice(&ep.positions);
        }
        points.extend_from_slice(bounds);
        Ok(Assembly {
            mesh,
            bank,
            spec,
            resolved,
            points,
        })
    }

    /// Every point the loss consumes, quadrature first then boundaries.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    fn quad_index(&self, element: usize, q: usize) -> usize {
        element * self.bank.points() + q
    }

    fn boundary_index(&self, b: usize) -> usize {
        self.mesh.n_elements() * self.bank.points() + b
    }

    /// Resolved `[left, right]` overrides of every flux term for `element`.
    pub fn overrides_for(&self, element: usize) -> Vec<[Option<f64>; 2]> {
        self.resolved
            .iter()
            .map(|map| {
                [
                    map.get(&(element, Side::Left)).copied(),
                    map.get(&(element, Side::Right)).copied(),
                ]
            })
            .collect()
    }

    /// Residual entries of every element for the current network state.
    pub fn element_residuals(&self, net: &DiffNet) -> Result<Vec<Vec<f64>>> {
        let order = self.spec.max_jet_order();
        let jets = net.forward_jets(&self.points, order)?;
        let q_count = self.bank.points();
        let mut out = Vec::with_capacity(self.mesh.n_elements());
        for n in 0..self.mesh.n_elements() {
            let quad: Vec<JetPoint> = (0..q_count)
                .map(|q| {
                    let i = self.quad_index(n, q);
                    JetPoint {
                        x: self.points[i],
                        jet: jets.jet(i),
                        order,
                    }
                })
                .collect();
            let left_i = self.boundary_index(n);
            let right_i = self.boundary_index(n + 1);
            let left = JetPoint {
                x: self.points[left_i],
                jet: jets.jet(left_i),
                order,
            };
            let right = JetPoint {
                x: self.points[right_i],
                jet: jets.jet(right_i),
                order,
            };
            out.push(element_residual(
                self.bank,
                self.spec,
                self.mesh.jacobian(n),
                &quad,
                &left,
                &right,
                &self.overrides_for(n),
            )?);
        }
        Ok(out)
    }

    /// `𝓛_R`: mean squared residual entry over all elements and test
    /// functions.
    pub fn residual_loss(&self, net: &DiffNet) -> Result<f64> {
        Ok(mean_of_squares(&self.element_residuals(net)?))
    }

    /// Loss evaluation for one optimizer step: `τ_R 𝓛_R + τ_B 𝓛_B` with the
    /// exact parameter gradient.
    pub fn loss_and_grad(
        &self,
        essentials: &[EssentialBc],
        net: &DiffNet,
        tau_r: f64,
        tau_b: f64,
    ) -> Result<StepEval> {
        let bc_order = essentials.iter().map(|e| e.order).max().unwrap_or(0);
        let order = self.spec.max_jet_order().max(bc_order);
        let bounds = self.mesh.boundaries();
        let mut bc_slots = Vec::with_capacity(essentials.len());
        for bc in essentials {
            let b = bounds
                .iter()
                .position(|&x| position_matches(x, bc.position))
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "essential condition at {} is not on an element boundary",
                        bc.position
                    ))
                })?;
            bc_slots.push((self.boundary_index(b), bc.order, bc.value));
        }

        let n_el = self.mesh.n_elements();
        let k_count = self.bank.count();
        let q_count = self.bank.points();
        let (total, grad, (loss_r, loss_b)) =
            net.param_gradient_with(&self.points, order, |tape, leaves| {
                // Flux signals at element boundaries are evaluated once per
                // boundary point and shared between neighbors.
                let flux_vars: Vec<Vec<Var<'_>>> = self
                    .spec
                    .fluxes
                    .iter()
                    .map(|flux| {
                        (0..=n_el)
                            .map(|b| {
                                let i = self.boundary_index(b);
                                flux.signal
                                    .eval_var(tape, self.points[i], &|m| leaves.jet(i, m))
                            })
                            .collect()
                    })
                    .collect();

                let mut sum_r: Option<Var<'_>> = None;
                for n in 0..n_el {
                    let jac = self.mesh.jacobian(n);
                    let overrides = self.overrides_for(n);
                    // Volume integrands per (term, q), shared across k.
                    let vol_vars: Vec<Vec<Var<'_>>> = self
                        .spec
                        .volumes
                        .iter()
                        .map(|volume| {
                            (0..q_count)
                                .map(|q| {
                                    let i = self.quad_index(n, q);
                                    volume
                                        .integrand
                                        .eval_var(tape, self.points[i], &|m| leaves.jet(i, m))
                                })
                                .collect()
                        })
                        .collect();
                    for k in 0..k_count {
                        let mut entry: Option<Var<'_>> = None;
                        let mut constant = 0.0;
                        for (t, flux) in self.spec.fluxes.iter().enumerate() {
                            let scale = flux.scale * jac.powi(flux.jacobian_power);
                            let (w_l, w_r) = match flux.weight {
                                BoundaryWeight::Value => (
                                    self.bank.boundary_values[k][0],
                                    self.bank.boundary_values[k][1],
                                ),
                                BoundaryWeight::Slope => (
                                    self.bank.boundary_dxi[k][0],
                                    self.bank.boundary_dxi[k][1],
                                ),
                            };
                            // An overridden side contributes a constant.
                            match overrides[t][1] {
                                Some(v) => constant += scale * w_r * v,
                                None => {
                                    let v = flux_vars[t][n + 1] * (scale * w_r);
                                    entry = Some(match entry {
                                        Some(e) => e + v,
                                        None => v,
                                    });
                                }
                            }
                            match overrides[t][0] {
                                Some(v) => constant -= scale * w_l * v,
                                None => {
                                    let v = flux_vars[t][n] * (-scale * w_l);
                                    entry = Some(match entry {
                                        Some(e) => e + v,
                                        None => v,
                                    });
                                }
                            }
                        }
                        for (t, volume) in self.spec.volumes.iter().enumerate() {
                            let scale = volume.scale * jac.powi(volume.jacobian_power);
                            let filter = match volume.filter {
                                FilterKind::Value => &self.bank.filters_value,
                                FilterKind::DXi => &self.bank.filters_dxi,
                                FilterKind::DXiXi => &self.bank.filters_dxixi,
                            };
                            for q in 0..q_count {
                                let v = vol_vars[t][q] * (scale * filter[k][q]);
                                entry = Some(match entry {
                                    Some(e) => e + v,
                                    None => v,
                                });
                            }
                        }
                        let entry = match entry {
                            Some(e) if constant != 0.0 => e + constant,
                            Some(e) => e,
                            None => tape.leaf(constant),
                        };
                        let sq = entry.square();
                        sum_r = Some(match sum_r {
                            Some(s) => s + sq,
                            None => sq,
                        });
                    }
                }
                let loss_r = match sum_r {
                    Some(s) => s * (1.0 / (n_el * k_count) as f64),
                    None => tape.leaf(0.0),
                };

                let mut sum_b: Option<Var<'_>> = None;
                for &(i, m, value) in &bc_slots {
                    let viol = (leaves.jet(i, m) - value).square();
                    sum_b = Some(match sum_b {
                        Some(s) => s + viol,
                        None => viol,
                    });
                }
                let loss_b = match sum_b {
                    Some(s) => s * (1.0 / bc_slots.len() as f64),
                    None => tape.leaf(0.0),
                };

                let total = loss_r * tau_r + loss_b * tau_b;
                (total, (loss_r.value(), loss_b.value()))
            })?;
        if !total.is_finite() {
            return Err(Error::numerical(format!("non-finite training loss {total}")));
        }
        Ok(StepEval {
            loss_r,
            loss_b,
            total,
            grad,
        })
    }
}

/// One loss/gradient evaluation.
pub struct StepEval {
    pub loss_r: f64,
    pub loss_b: f64,
    pub total: f64,
    pub grad: Vec<f64>,
}

/// `𝓛_B`: mean squared violation of the essential conditions only; natural
/// conditions never appear here.
pub fn boundary_loss(essentials: &[EssentialBc], net: &DiffNet) -> Result<f64> {
    if essentials.is_empty() {
        return Err(Error::invalid(
            "boundary loss needs at least one essential condition",
        ));
    }
    let order = essentials.iter().map(|e| e.order).max().unwrap();
    let points: Vec<f64> = essentials.iter().map(|e| e.position).collect();
    let jets = net.forward_jets(&points, order)?;
    let sum: f64 = essentials
        .iter()
        .enumerate()
        .map(|(i, bc)| {
            let v = jets.jet(i)[bc.order] - bc.value;
            v * v
        })
        .sum();
    Ok(sum / essentials.len() as f64)
}

/// Optimization phase: penalties ascend under ADAM and freeze under L-BFGS.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Adam,
    Lbfgs,
}

/// Loss terms and their penalty weights at one training iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossState {
    pub loss_r: f64,
    pub loss_b: f64,
    pub tau_r: f64,
    pub tau_b: f64,
    pub phase: Phase,
}

impl LossState {
    pub fn initial() -> Self {
        LossState {
            loss_r: 0.0,
            loss_b: 0.0,
            tau_r: 1.0,
            tau_b: 1.0,
            phase: Phase::Adam,
        }
    }
}

/// `𝓛 = τ_R 𝓛_R + τ_B 𝓛_B`.
pub fn total_loss(state: &LossState) -> f64 {
    state.tau_r * state.loss_r + state.tau_b * state.loss_b
}

/// Gradient-ascent update of the penalties, clamped nondecreasing; the
/// ascent direction `∂𝓛/∂τ` is the corresponding loss term. Penalties are
/// frozen during the L-BFGS phase.
pub fn update_penalties(state: &LossState, eta: f64) -> LossState {
    match state.phase {
        Phase::Lbfgs => *state,
        Phase::Adam => LossState {
            tau_r: state.tau_r.max(state.tau_r + eta * state.loss_r),
            tau_b: state.tau_b.max(state.tau_b + eta * state.loss_b),
            ..*state
        },
    }
}
