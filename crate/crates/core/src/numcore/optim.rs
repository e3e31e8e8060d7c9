//! Adaptive-moment (Adam) optimizer with bias correction.

use serde::{Deserialize, Serialize};

use super::mlp::Parameterized;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    /// One buffer per layer: weights followed by biases.
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &impl Parameterized, learning_rate: f64) -> Result<Self> {
        Self::with_betas(params, learning_rate, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(
        params: &impl Parameterized,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::config("optimizer betas must lie in [0, 1)"));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) || !(epsilon > 0.0) {
            return Err(Error::config("learning rate and epsilon must be positive"));
        }
        let zeros: Vec<Vec<f64>> = params.layers().iter().map(|l| vec![0.0; l.param_count()]).collect();
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        })
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// A non-finite gradient aborts the step before any parameter moves.
    pub fn step(&mut self, params: &mut impl Parameterized) -> Result<()> {
        let mut layers = params.layers_mut();
        if layers.len() != self.first_moment.len()
            || layers.iter().zip(&self.first_moment).any(|(l, m)| l.param_count() != m.len())
        {
            return Err(Error::config("optimizer state does not match parameter shapes"));
        }
        for (li, l) in layers.iter().enumerate() {
            if let Some(pos) = l.grad_weights.iter().chain(&l.grad_bias).position(|g| !g.is_finite()) {
                return Err(Error::numerical(format!(
                    "non-finite gradient at layer {li}, parameter {pos} (step {})",
                    self.step_count
                )));
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (li, layer) in layers.iter_mut().enumerate() {
            let m = &mut self.first_moment[li];
            let v = &mut self.second_moment[li];
            let nw = layer.weights.len();
            let layer = &mut **layer;
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let grads = layer.grad_weights.iter().chain(layer.grad_bias.iter());
            for (k, (p, &g)) in params.zip(grads).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            debug_assert_eq!(nw + layer.bias.len(), m.len());
            layer.zero_grad();
        }
        Ok(())
    }
}
