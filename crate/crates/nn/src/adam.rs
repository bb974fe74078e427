use crate::error::{check_len, NnError, Result};
use crate::network::Network;

/// Bias-corrected Adam moments for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self::with_hyperparameters(n_params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters(n_params: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// Applies one descent step to `params` in place. Non-finite gradients are
    /// refused before anything is modified.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        check_len("adam parameters", self.len(), params.len())?;
        check_len("adam gradient", self.len(), grads.len())?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite("gradient"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Adam step on a network's flat parameters.
pub fn adam_step(net: &mut Network, grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    state.step(net.params_mut(), grads, lr)
}
