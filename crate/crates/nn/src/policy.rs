//! Tanh-squashed diagonal Gaussian policy head.

use crate::error::{check_len, NnError, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;
/// Largest f64 strictly below one.
const ACTION_BOUND: f64 = 1.0 - f64::EPSILON / 2.0;

/// Maps an unconstrained head output into `[LOG_STD_MIN, LOG_STD_MAX]`.
pub fn squash_log_std(raw: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

/// d squash_log_std / d raw.
pub fn squash_log_std_grad(raw: f64) -> f64 {
    let t = raw.tanh();
    0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log(1 - tanh(u)^2)` without cancellation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    /// `mean + exp(log_std) * noise`.
    pub pre_squash: Vec<f64>,
    pub sampled_action: Vec<f64>,
    pub log_prob: f64,
}

/// Reparameterized sample `tanh(mean + exp(log_std) * noise)` with the change-of-variables log-density.
pub fn sample_squashed_gaussian(
    mean: &[f64],
    log_std: &[f64],
    noise: &[f64],
) -> Result<GaussianPolicyOutput> {
    check_len("log_std", mean.len(), log_std.len())?;
    check_len("noise", mean.len(), noise.len())?;
    if log_std
        .iter()
        .any(|l| !(LOG_STD_MIN..=LOG_STD_MAX).contains(l))
    {
        return Err(NnError::NonFinite("log_std outside clamp range"));
    }
    let mut pre = Vec::with_capacity(mean.len());
    let mut action = Vec::with_capacity(mean.len());
    let mut log_prob = 0.0;
    for ((&m, &ls), &eps) in mean.iter().zip(log_std).zip(noise) {
        let u = m + ls.exp() * eps;
        log_prob += -0.5 * eps * eps - ls - HALF_LOG_2PI - log_one_minus_tanh_sq(u);
        pre.push(u);
        action.push(u.tanh().clamp(-ACTION_BOUND, ACTION_BOUND));
    }
    if !log_prob.is_finite() {
        return Err(NnError::NonFinite("log_prob"));
    }
    Ok(GaussianPolicyOutput {
        mean: mean.to_vec(),
        log_std: log_std.to_vec(),
        pre_squash: pre,
        sampled_action: action,
        log_prob,
    })
}

/// Deterministic action used for greedy evaluation.
pub fn greedy_action(mean: &[f64]) -> Vec<f64> {
    mean.iter()
        .map(|m| m.tanh().clamp(-ACTION_BOUND, ACTION_BOUND))
        .collect()
}

impl GaussianPolicyOutput {
    /// Pulls `d_action` (gradient on the squashed action) and `d_log_prob`
    /// (coefficient on `log_prob`) back to the mean and log-std, holding the
    /// noise fixed.
    pub fn backward(&self, noise: &[f64], d_action: &[f64], d_log_prob: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.mean.len();
        let mut d_mean = Vec::with_capacity(n);
        let mut d_log_std = Vec::with_capacity(n);
        for i in 0..n {
            let a = self.pre_squash[i].tanh();
            // d log_prob / du = 2 tanh(u); the Gaussian part is constant in u under reparameterization.
            let d_u = d_action[i] * (1.0 - a * a) + d_log_prob * 2.0 * a;
            d_mean.push(d_u);
            d_log_std.push(d_u * self.log_std[i].exp() * noise[i] - d_log_prob);
        }
        (d_mean, d_log_std)
    }
}
