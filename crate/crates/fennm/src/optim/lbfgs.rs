//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The search direction comes from the standard two-loop recursion over up
//! to `m` stored curvature pairs, with the initial Hessian approximation
//! scaled by `sᵀy / yᵀy`. Pairs violating the curvature condition
//! `sᵀy > 1e-14` are skipped. A failed line search falls back to one
//! steepest-descent step; a second consecutive failure terminates the run.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    /// Number of stored curvature pairs.
    pub history: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_iters: usize,
    /// Stop when the gradient 2-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the loss falls to this floor (float64 machine epsilon by
    /// default: a squared loss cannot resolve anything smaller).
    pub loss_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            history: 20,
            c1: 1e-4,
            c2: 0.9,
            max_iters: 100,
            grad_tol: 0.0,
            loss_tol: 2.220e-16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIters,
    GradientTol,
    LossTol,
    LineSearchFailed,
    AlreadyStationary,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub loss: f64,
    pub iterations: usize,
    /// Loss after each accepted iteration.
    pub losses: Vec<f64>,
    pub termination: Termination,
}

const CURVATURE_FLOOR: f64 = 1e-14;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion: `H g` with the stored pairs.
fn search_direction(pairs: &VecDeque<Pair>, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for pair in pairs.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = pairs.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for (pair, &a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

struct ProbeResult {
    loss: f64,
    grad: Vec<f64>,
    dphi: f64,
}

/// Strong-Wolfe line search (bracketing plus zoom with safeguarded
/// interpolation). Returns the accepted step and its evaluation.
fn strong_wolfe<F>(
    eval: &mut F,
    x: &[f64],
    direction: &[f64],
    phi0: f64,
    dphi0: f64,
    c1: f64,
    c2: f64,
    alpha_init: f64,
) -> Result<Option<(f64, ProbeResult)>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let probe = |eval: &mut F, alpha: f64| -> Result<ProbeResult> {
        let trial: Vec<f64> = x
            .iter()
            .zip(direction)
            .map(|(xi, di)| xi + alpha * di)
            .collect();
        let (loss, grad) = eval(&trial)?;
        let dphi = dot(&grad, direction);
        Ok(ProbeResult { loss, grad, dphi })
    };

    let zoom = |eval: &mut F,
                mut lo: f64,
                mut phi_lo: f64,
                mut dphi_lo: f64,
                mut hi: f64,
                mut phi_hi: f64|
     -> Result<Option<(f64, ProbeResult)>> {
        for _ in 0..30 {
            // Quadratic minimizer from (phi_lo, dphi_lo, phi_hi), safeguarded
            // to the bracket interior; bisection otherwise. The bracket ends
            // are not ordered.
            let span = hi - lo;
            let denom = phi_hi - phi_lo - dphi_lo * span;
            let mut alpha = lo - 0.5 * dphi_lo * span * span / denom;
            let lo_guard = lo + 0.1 * span;
            let hi_guard = hi - 0.1 * span;
            if !alpha.is_finite() || (alpha - lo_guard) * (alpha - hi_guard) > 0.0 {
                alpha = lo + 0.5 * span;
            }
            let res = probe(eval, alpha)?;
            if res.loss > phi0 + c1 * alpha * dphi0 || res.loss >= phi_lo {
                hi = alpha;
                phi_hi = res.loss;
            } else {
                if res.dphi.abs() <= -c2 * dphi0 {
                    return Ok(Some((alpha, res)));
                }
                if res.dphi * span >= 0.0 {
                    hi = lo;
                    phi_hi = phi_lo;
                }
                lo = alpha;
                phi_lo = res.loss;
                dphi_lo = res.dphi;
            }
            if (hi - lo).abs() <= 1e-16 * lo.abs().max(1.0) {
                break;
            }
        }
        Ok(None)
    };

    let alpha_max = 1e6;
    let mut alpha_prev = 0.0;
    let mut phi_prev = phi0;
    let mut dphi_prev = dphi0;
    let mut alpha = alpha_init;
    for i in 0..20 {
        let res = probe(eval, alpha)?;
        if res.loss > phi0 + c1 * alpha * dphi0 || (i > 0 && res.loss >= phi_prev) {
            return zoom(eval, alpha_prev, phi_prev, dphi_prev, alpha, res.loss);
        }
        if res.dphi.abs() <= -c2 * dphi0 {
            return Ok(Some((alpha, res)));
        }
        if res.dphi >= 0.0 {
            return zoom(eval, alpha, res.loss, res.dphi, alpha_prev, phi_prev);
        }
        alpha_prev = alpha;
        phi_prev = res.loss;
        dphi_prev = res.dphi;
        alpha = (2.0 * alpha).min(alpha_max);
        if alpha_prev >= alpha_max {
            break;
        }
    }
    Ok(None)
}

/// Minimize `loss_and_grad` from `params` in place.
///
/// `on_accept(iteration, params, loss)` fires after every accepted iterate.
pub fn lbfgs_run_observed<F>(
    params: &mut [f64],
    mut loss_and_grad: F,
    opts: &LbfgsOptions,
    mut on_accept: impl FnMut(usize, &[f64], f64),
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (mut loss, mut grad) = loss_and_grad(params)?;
    if !loss.is_finite() {
        return Err(Error::numerical("non-finite initial loss in L-BFGS"));
    }
    let mut losses = Vec::new();
    if norm(&grad) == 0.0 {
        return Ok(LbfgsOutcome {
            loss,
            iterations: 0,
            losses,
            termination: Termination::AlreadyStationary,
        });
    }

    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(opts.history);
    let mut fallback_armed = false;
    let mut iterations = 0;
    let mut termination = Termination::MaxIters;

    for iter in 0..opts.max_iters {
        if loss <= opts.loss_tol {
            termination = Termination::LossTol;
            break;
        }
        if norm(&grad) <= opts.grad_tol {
            termination = Termination::GradientTol;
            break;
        }

        let mut direction = search_direction(&pairs, &grad);
        let mut dphi0 = dot(&grad, &direction);
        if dphi0 >= 0.0 {
            // Not a descent direction; discard the memory.
            pairs.clear();
            direction = grad.iter().map(|g| -g).collect();
            dphi0 = dot(&grad, &direction);
        }
        let alpha_init = if pairs.is_empty() {
            (1.0 / norm(&grad)).min(1.0)
        } else {
            1.0
        };

        let mut accepted = strong_wolfe(
            &mut loss_and_grad,
            params,
            &direction,
            loss,
            dphi0,
            opts.c1,
            opts.c2,
            alpha_init,
        )?;
        if accepted.is_none() {
            if fallback_armed {
                termination = Termination::LineSearchFailed;
                break;
            }
            // One steepest-descent rescue with fresh memory.
            fallback_armed = true;
            pairs.clear();
            direction = grad.iter().map(|g| -g).collect();
            dphi0 = dot(&grad, &direction);
            accepted = strong_wolfe(
                &mut loss_and_grad,
                params,
                &direction,
                loss,
                dphi0,
                opts.c1,
                opts.c2,
                (1.0 / norm(&grad)).min(1.0),
            )?;
            if accepted.is_none() {
                termination = Termination::LineSearchFailed;
                break;
            }
        } else {
            fallback_armed = false;
        }
        let (alpha, res) = accepted.unwrap();

        let s: Vec<f64> = direction.iter().map(|d| alpha * d).collect();
        let y: Vec<f64> = res.grad.iter().zip(&grad).map(|(n, o)| n - o).collect();
        let sy = dot(&s, &y);
        if sy > CURVATURE_FLOOR {
            if pairs.len() == opts.history {
                pairs.pop_front();
            }
            pairs.push_back(Pair {
                rho: 1.0 / sy,
                s,
                y,
            });
        }
        for (p, d) in params.iter_mut().zip(&direction) {
            *p += alpha * d;
        }
        loss = res.loss;
        grad = res.grad;
        iterations = iter + 1;
        on_accept(iterations, params, loss);
        losses.push(loss);
    }
    if termination == Termination::MaxIters && loss <= opts.loss_tol {
        termination = Termination::LossTol;
    }
    Ok(LbfgsOutcome {
        loss,
        iterations,
        losses,
        termination,
    })
}

/// [`lbfgs_run_observed`] without an observer.
pub fn lbfgs_run<F>(params: &mut [f64], loss_and_grad: F, opts: &LbfgsOptions) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    lbfgs_run_observed(params, loss_and_grad, opts, |_, _, _| {})
}
