//! ADAM with bias correction.

use crate::error::{Error, Result};

/// First/second moment estimates plus the step hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(dof: usize, alpha: f64) -> Self {
        AdamState {
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; dof],
            v: vec![0.0; dof],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected ADAM update in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64]) -> Result<()> {
    if grad.len() != params.len() || grad.len() != state.m.len() {
        return Err(Error::invalid(format!(
            "gradient length {} does not match parameter length {}",
            grad.len(),
            params.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical("non-finite gradient in ADAM step"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        params[i] -= state.alpha * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradient_leaves_params_untouched() {
        let mut state = AdamState::new(3, 1e-3);
        let mut params = vec![1.0, -2.0, 0.5];
        adam_step(&mut state, &mut params, &[0.0; 3]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn quadratic_converges() {
        let mut state = AdamState::new(1, 0.1);
        let mut p = vec![1.0];
        for _ in 0..200 {
            let grad = [2.0 * p[0]];
            adam_step(&mut state, &mut p, &grad).unwrap();
        }
        assert!(p[0].abs() < 1e-2, "p = {}", p[0]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut state = AdamState::new(2, 1e-3);
        let mut params = vec![0.0, 0.0];
        adam_step(&mut state, &mut params, &[3.0, -0.25]).unwrap();
        // m̂/√v̂ = ±1 on the first step, up to ε.
        assert_abs_diff_eq!(params[0], -1e-3, epsilon = 1e-8);
        assert_abs_diff_eq!(params[1], 1e-3, epsilon = 1e-8);
    }

    #[test]
    fn rejects_non_finite_and_mismatched_gradients() {
        let mut state = AdamState::new(2, 1e-3);
        let mut params = vec![0.0, 0.0];
        assert!(adam_step(&mut state, &mut params, &[f64::NAN, 0.0]).is_err());
        assert!(adam_step(&mut state, &mut params, &[1.0]).is_err());
    }
}
