//! Bias-corrected Adam.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    config: AdamConfig,
}

impl AdamState {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Self { m: vec![0.0; param_count], v: vec![0.0; param_count], step: 0, config }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Adjust the learning rate (the moments are untouched); used by
    /// decaying schedules.
    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape { expected: self.m.len(), got: params.len().min(grads.len()) });
        }
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grads[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(3, AdamConfig::default());
        let mut params = vec![1.0, -2.0, 0.5];
        state.update(&mut params, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_signed_lr() {
        // bias correction gives m_hat = g, v_hat = g^2, so the step is
        // -lr * sign(g) up to epsilon
        let config = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut state = AdamState::new(2, config);
        let mut params = vec![0.0, 0.0];
        state.update(&mut params, &[3.0, -0.2]).unwrap();
        assert_relative_eq!(params[0], -0.1, epsilon = 1e-8);
        assert_relative_eq!(params[1], 0.1, epsilon = 1e-7);
    }

    #[test]
    fn two_steps_constant_gradient_pinned() {
        // hand-evaluated recurrence: lr=0.1, g=0.5, start 1.0
        //   after step 1: 0.900000002, after step 2: 0.800000004
        let config = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut state = AdamState::new(1, config);
        let mut params = vec![1.0];
        state.update(&mut params, &[0.5]).unwrap();
        assert_relative_eq!(params[0], 0.900000002, epsilon = 1e-9);
        state.update(&mut params, &[0.5]).unwrap();
        assert_relative_eq!(params[0], 0.800000004, epsilon = 1e-9);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut state = AdamState::new(2, AdamConfig::default());
        let mut params = vec![0.0, 0.0];
        assert!(state.update(&mut params, &[1.0]).is_err());
        let mut short = vec![0.0];
        assert!(state.update(&mut short, &[1.0, 1.0]).is_err());
    }
}
