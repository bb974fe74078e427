//! Mixing of prior and RL actions, ensemble uncertainty, weight adaption and
//! the contextualized replay buffer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, CoreError, Result};

fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(CoreError::OutOfRange { name, value, lo: 0.0, hi: 1.0 });
    }
    Ok(())
}

/// Regularized mixing `(1 - lambda) * a_prior + lambda * a_rl`.
pub fn mix(a_prior: &[f64], a_rl: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_len("a_rl", a_prior.len(), a_rl.len())?;
    check_unit("lambda", lambda)?;
    if lambda == 0.0 {
        return Ok(a_prior.to_vec());
    }
    if lambda == 1.0 {
        return Ok(a_rl.to_vec());
    }
    Ok(a_prior
        .iter()
        .zip(a_rl)
        .map(|(p, r)| (1.0 - lambda) * p + lambda * r)
        .collect())
}

/// Residual mixing `a_prior + lambda_rl * a_rl`, clipped to `[-1, 1]`.
pub fn mix_residual(a_prior: &[f64], a_rl: &[f64], lambda_rl: f64) -> Result<Vec<f64>> {
    check_len("a_rl", a_prior.len(), a_rl.len())?;
    check_unit("lambda_rl", lambda_rl)?;
    Ok(a_prior
        .iter()
        .zip(a_rl)
        .map(|(p, r)| (p + lambda_rl * r).clamp(-1.0, 1.0))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingKind {
    #[default]
    Regularized,
    Residual,
}

impl MixingKind {
    pub fn apply(self, a_prior: &[f64], a_rl: &[f64], lambda: f64) -> Result<Vec<f64>> {
        match self {
            Self::Regularized => mix(a_prior, a_rl, lambda),
            Self::Residual => mix_residual(a_prior, a_rl, lambda),
        }
    }
}

/// Population standard deviation (`1/E` normalization) of the ensemble predictions.
pub fn ensemble_uncertainty(q_values: &[f64]) -> Result<f64> {
    if q_values.len() < 2 {
        return Err(CoreError::InvalidConfig(format!(
            "uncertainty needs at least two critics, got {}",
            q_values.len()
        )));
    }
    let n = q_values.len() as f64;
    let mean = q_values.iter().sum::<f64>() / n;
    let var = q_values.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            lambda_min: 0.2,
            lambda_max: 1.0,
            u_min: 0.03,
            u_max: 0.15,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit("lambda_min", self.lambda_min)?;
        check_unit("lambda_max", self.lambda_max)?;
        if self.lambda_min > self.lambda_max {
            return Err(CoreError::InvalidConfig("lambda_min exceeds lambda_max".into()));
        }
        if !(self.u_min >= 0.0 && self.u_min < self.u_max) {
            return Err(CoreError::InvalidConfig("need 0 <= u_min < u_max".into()));
        }
        Ok(())
    }
}

/// Piecewise-linear map from uncertainty to RL weight.
pub fn adapt_weight_cheq(u: f64, cfg: &WeightConfig) -> f64 {
    if u <= cfg.u_min {
        cfg.lambda_max
    } else if u >= cfg.u_max {
        cfg.lambda_min
    } else {
        let t = (u - cfg.u_max) / (cfg.u_min - cfg.u_max);
        (t * (cfg.lambda_max - cfg.lambda_min) + cfg.lambda_min).clamp(cfg.lambda_min, cfg.lambda_max)
    }
}

/// `clip(t / horizon, 0, 1)`
pub fn adapt_weight_schedule(t: u64, horizon: u64) -> f64 {
    (t as f64 / horizon.max(1) as f64).clamp(0.0, 1.0)
}

/// `1 / (1 + A (1 - exp(-C |delta|)))`
pub fn adapt_weight_core(td_error: f64, a: f64, c: f64) -> f64 {
    1.0 / (1.0 + a * (1.0 - (-c * td_error.abs()).exp()))
}

/// Inputs available to an adaptor when choosing the next weight.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdaptSignal {
    /// Environment steps taken so far.
    pub step: u64,
    pub uncertainty: f64,
    pub td_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightAdaptor {
    Fixed { lambda: f64 },
    Schedule { horizon: u64 },
    Cheq(WeightConfig),
    Core { a: f64, c: f64 },
}

impl Default for WeightAdaptor {
    fn default() -> Self {
        Self::Cheq(WeightConfig::default())
    }
}

impl WeightAdaptor {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Fixed { lambda } => check_unit("lambda", *lambda),
            Self::Schedule { horizon } if *horizon == 0 => {
                Err(CoreError::InvalidConfig("schedule horizon must be positive".into()))
            }
            Self::Schedule { .. } => Ok(()),
            Self::Cheq(cfg) => cfg.validate(),
            Self::Core { a, c } if !(*a >= 0.0 && *c > 0.0) => {
                Err(CoreError::InvalidConfig("CORE weight needs A >= 0 and C > 0".into()))
            }
            Self::Core { .. } => Ok(()),
        }
    }

    /// `(lambda_min, lambda_max)` of the adaptor's output.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Self::Fixed { lambda } => (*lambda, *lambda),
            Self::Schedule { .. } => (0.0, 1.0),
            Self::Cheq(cfg) => (cfg.lambda_min, cfg.lambda_max),
            Self::Core { a, .. } => (1.0 / (1.0 + a), 1.0),
        }
    }

    /// Weight at the start of every episode.
    pub fn initial(&self, step: u64) -> f64 {
        match self {
            Self::Schedule { horizon } => adapt_weight_schedule(step, *horizon),
            _ => self.bounds().0,
        }
    }

    pub fn next(&self, signal: &AdaptSignal) -> f64 {
        let (lo, hi) = self.bounds();
        let raw = match self {
            Self::Fixed { lambda } => *lambda,
            Self::Schedule { horizon } => adapt_weight_schedule(signal.step, *horizon),
            Self::Cheq(cfg) => adapt_weight_cheq(signal.uncertainty, cfg),
            Self::Core { a, c } => adapt_weight_core(signal.td_error, *a, *c),
        };
        raw.clamp(lo, hi)
    }

    pub fn needs_uncertainty(&self) -> bool {
        matches!(self, Self::Cheq(_))
    }

    pub fn needs_td_error(&self) -> bool {
        matches!(self, Self::Core { .. })
    }
}

/// Independent `Bernoulli(kappa)` inclusion flags, one per critic.
pub fn sample_bernoulli_masks<R: Rng + ?Sized>(ensemble: usize, kappa: f64, rng: &mut R) -> Vec<bool> {
    (0..ensemble).map(|_| rng.random::<f64>() < kappa).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Stored action: `a_RL`, or `a_mix` for the mixed-action formulation.
    pub action: Vec<f64>,
    pub lambda: f64,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub masks: Vec<bool>,
}

/// Row-major minibatch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub size: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub dones: Vec<bool>,
    /// `size x ensemble`
    pub masks: Vec<bool>,
}

impl Batch {
    pub fn mask(&self, item: usize, critic: usize, ensemble: usize) -> bool {
        self.masks[item * ensemble + critic]
    }
}

/// Fixed-capacity FIFO ring of transitions in flat storage.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    ensemble: usize,
    len: usize,
    cursor: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    lambdas: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    dones: Vec<bool>,
    masks: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize, ensemble: usize) -> Result<Self> {
        if capacity == 0 || obs_dim == 0 || action_dim == 0 || ensemble == 0 {
            return Err(CoreError::InvalidConfig("replay buffer dimensions must be positive".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            action_dim,
            ensemble,
            len: 0,
            cursor: 0,
            obs: Vec::new(),
            actions: Vec::new(),
            lambdas: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            dones: Vec::new(),
            masks: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        check_len("transition obs", self.obs_dim, t.obs.len())?;
        check_len("transition next_obs", self.obs_dim, t.next_obs.len())?;
        check_len("transition action", self.action_dim, t.action.len())?;
        check_len("transition masks", self.ensemble, t.masks.len())?;
        check_unit("transition lambda", t.lambda)?;
        if self.len < self.capacity {
            // grow lazily so large capacities cost nothing up front
            self.obs.extend_from_slice(&t.obs);
            self.actions.extend_from_slice(&t.action);
            self.lambdas.push(t.lambda);
            self.rewards.push(t.reward);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.dones.push(t.done);
            self.masks.extend_from_slice(&t.masks);
            self.len += 1;
        } else {
            let i = self.cursor;
            self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.obs);
            self.actions[i * self.action_dim..(i + 1) * self.action_dim].copy_from_slice(&t.action);
            self.lambdas[i] = t.lambda;
            self.rewards[i] = t.reward;
            self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.next_obs);
            self.dones[i] = t.done;
            self.masks[i * self.ensemble..(i + 1) * self.ensemble].copy_from_slice(&t.masks);
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Transition at storage slot `i`.
    pub fn get(&self, i: usize) -> Option<Transition> {
        (i < self.len).then(|| Transition {
            obs: self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            action: self.actions[i * self.action_dim..(i + 1) * self.action_dim].to_vec(),
            lambda: self.lambdas[i],
            reward: self.rewards[i],
            next_obs: self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            done: self.dones[i],
            masks: self.masks[i * self.ensemble..(i + 1) * self.ensemble].to_vec(),
        })
    }

    /// Uniform sample indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.len < batch_size || batch_size == 0 {
            return Err(CoreError::BufferUnderfilled { size: self.len, needed: batch_size.max(1) });
        }
        Ok((0..batch_size).map(|_| rng.random_range(0..self.len)).collect())
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let mut b = Batch {
            size: indices.len(),
            ..Default::default()
        };
        for &i in indices {
            b.obs.extend_from_slice(&self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            b.actions.extend_from_slice(&self.actions[i * self.action_dim..(i + 1) * self.action_dim]);
            b.lambdas.push(self.lambdas[i]);
            b.rewards.push(self.rewards[i]);
            b.next_obs.extend_from_slice(&self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim]);
            b.dones.push(self.dones[i]);
            b.masks.extend_from_slice(&self.masks[i * self.ensemble..(i + 1) * self.ensemble]);
        }
        b
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch_size, rng)?;
        Ok(self.gather(&idx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(k: usize) -> Transition {
        Transition {
            obs: vec![k as f64; 2],
            action: vec![0.1],
            lambda: 0.3,
            reward: k as f64,
            next_obs: vec![k as f64 + 1.0; 2],
            done: false,
            masks: vec![true, false],
        }
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut buf = ReplayBuffer::new(3, 2, 1, 2).unwrap();
        for k in 0..4 {
            buf.push(item(k)).unwrap();
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| buf.get(i).unwrap().reward).collect();
        assert!(!rewards.contains(&0.0));
        assert_eq!(buf.get(0).unwrap(), item(3));
    }

    #[test]
    fn underfilled_and_malformed() {
        let mut buf = ReplayBuffer::new(10, 2, 1, 2).unwrap();
        buf.push(item(0)).unwrap();
        let mut rng = rand::rng();
        assert!(matches!(buf.sample(2, &mut rng), Err(CoreError::BufferUnderfilled { .. })));
        let mut bad = item(1);
        bad.masks.pop();
        assert!(buf.push(bad).is_err());
    }

    #[test]
    fn adaptor_bounds() {
        let core = WeightAdaptor::Core { a: 7.0, c: 0.02 };
        assert_eq!(core.bounds().0, 0.125);
        assert_eq!(core.initial(0), 0.125);
        assert_eq!(WeightAdaptor::Schedule { horizon: 100 }.initial(50), 0.5);
        assert!(WeightAdaptor::Fixed { lambda: 1.5 }.validate().is_err());
    }
}
