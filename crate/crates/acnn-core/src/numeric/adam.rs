//! Adam optimizer over a flat parameter block. The model concatenates all its
//! tensors into one slice per update so a single moment state covers
//! everything.

use serde::{Deserialize, Serialize};

/// Adam hyperparameters. The defaults are the commonly used ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update, in place:
    ///
    /// `m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2`
    /// `param -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)`
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &AdamConfig) {
        assert_eq!(params.len(), self.m.len(), "parameter block size changed");
        assert_eq!(grads.len(), self.m.len(), "gradient block size changed");
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut state = AdamState::new(3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        state.step(&mut params, &[0.0; 3], &AdamConfig::default());
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_size_is_roughly_learning_rate() {
        // With g = 1: m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
        let mut state = AdamState::new(1);
        let mut params = vec![0.0];
        state.step(&mut params, &[1.0], &AdamConfig::default());
        assert!((params[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn step_direction_opposes_gradient() {
        let mut state = AdamState::new(2);
        let mut params = vec![0.0, 0.0];
        state.step(&mut params, &[3.0, -0.2], &AdamConfig::default());
        assert!(params[0] < 0.0);
        assert!(params[1] > 0.0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let cfg = AdamConfig::default();
        let grads: Vec<Vec<f64>> = (0..10)
            .map(|t| (0..4).map(|i| ((t * 4 + i) as f64).sin()).collect())
            .collect();
        let run = || {
            let mut state = AdamState::new(4);
            let mut params = vec![0.1, 0.2, 0.3, 0.4];
            for g in &grads {
                state.step(&mut params, g, &cfg);
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn converges_on_a_quadratic() {
        // Minimize (x - 3)^2; gradient 2(x - 3).
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(1);
        let mut params = vec![0.0];
        for _ in 0..2000 {
            let g = 2.0 * (params[0] - 3.0);
            state.step(&mut params, &[g], &cfg);
        }
        assert!((params[0] - 3.0).abs() < 1e-3);
    }
}
