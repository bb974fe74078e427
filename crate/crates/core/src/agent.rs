//! Soft actor-critic with a critic ensemble, randomized subset minimization
//! for targets, Bernoulli-masked critic losses and an optional weight context
//! input.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use cheq_nn::policy::{squash_log_std, squash_log_std_grad};
use cheq_nn::{adam_step, greedy_action, sample_squashed_gaussian, Activation, AdamState, GaussianPolicyOutput, Network};

use crate::error::{check_len, CoreError, Result};
use crate::hybrid::Batch;

/// Which MDP the learner is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Weight is a context input; the RL action is stored.
    #[default]
    Contextualized,
    /// No weight input; the RL action is stored.
    StationaryHybrid,
    /// No weight input; the mixed action is stored.
    MixedAction,
}

impl Formulation {
    pub fn context_input(self) -> bool {
        matches!(self, Self::Contextualized)
    }

    pub fn stores_mixed_action(self) -> bool {
        matches!(self, Self::MixedAction)
    }
}

/// How the actor objective reduces the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QReduction {
    #[default]
    Mean,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub ensemble_size: usize,
    pub subset_size: usize,
    pub utd_ratio: usize,
    pub mask_rate: f64,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub initial_alpha: f64,
    /// Defaults to `-action_dim`.
    pub target_entropy: Option<f64>,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    /// Uniformly random actions for this many steps; the first gradient update follows it.
    pub learning_starts: u64,
    /// Until this step the weight is drawn from `warmup_lambda` instead of the adaptor.
    pub lambda_warmup_steps: u64,
    pub warmup_lambda: [f64; 2],
    pub formulation: Formulation,
    /// Overrides the context input implied by the formulation; contradictions are rejected.
    pub context_input: Option<bool>,
    pub actor_q: QReduction,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 5,
            subset_size: 2,
            utd_ratio: 1,
            mask_rate: 0.8,
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            initial_alpha: 1.0,
            target_entropy: None,
            batch_size: 256,
            hidden: vec![256, 256],
            buffer_capacity: 1_000_000,
            learning_starts: 1_000,
            lambda_warmup_steps: 5_000,
            warmup_lambda: [0.2, 0.3],
            formulation: Formulation::Contextualized,
            context_input: None,
            actor_q: QReduction::Mean,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidConfig(m.into()));
        if self.ensemble_size == 0 || self.subset_size == 0 || self.subset_size > self.ensemble_size {
            return bad("need 1 <= subset_size <= ensemble_size");
        }
        if self.utd_ratio == 0 {
            return bad("utd_ratio must be at least 1");
        }
        if !(self.mask_rate > 0.0 && self.mask_rate <= 1.0) {
            return bad("mask_rate must lie in (0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        for lr in [self.actor_lr, self.critic_lr, self.alpha_lr] {
            if !(lr.is_finite() && lr > 0.0) {
                return bad("learning rates must be positive");
            }
        }
        if !(self.initial_alpha.is_finite() && self.initial_alpha > 0.0) {
            return bad("initial_alpha must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity must hold at least one batch");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty and positive");
        }
        let [lo, hi] = self.warmup_lambda;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return bad("warmup_lambda must be an ordered range inside [0, 1]");
        }
        if let Some(ctx) = self.context_input {
            if ctx != self.formulation.context_input() {
                return Err(CoreError::InvalidConfig(format!(
                    "{:?} formulation cannot be combined with context_input = {ctx}",
                    self.formulation
                )));
            }
        }
        if self.actor_q == QReduction::Min && self.ensemble_size > 2 {
            return bad("min reduction of the actor objective is only supported for two critics");
        }
        Ok(())
    }

    pub fn uses_context(&self) -> bool {
        self.formulation.context_input()
    }
}

/// Output of [`SacEnsembleAgent::critic_loss_grad`].
#[derive(Debug, Clone)]
pub struct CriticPass {
    /// `(1/|B|) sum_i m_i (Q(x_i) - y_i)^2`
    pub loss: f64,
    pub grads: Vec<f64>,
    /// Number of unmasked items.
    pub active: usize,
}

/// Output of [`SacEnsembleAgent::actor_loss_grad`].
#[derive(Debug, Clone)]
pub struct ActorPass {
    /// `(1/|B|) sum_i (alpha log pi_i - Qred_i)`, minimized.
    pub loss: f64,
    pub grads: Vec<f64>,
    pub log_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    /// Mean loss over the critics that took a step.
    pub critic_loss_mean: f64,
    /// `(1/|B|) sum_i (Qred_i - alpha log pi_i)`, the maximized actor objective.
    pub actor_objective: f64,
    pub alpha: f64,
    /// Mean of `-log pi` over the actor batch.
    pub entropy: f64,
}

#[derive(Debug, Clone)]
pub struct SacEnsembleAgent {
    config: AgentConfig,
    obs_dim: usize,
    action_dim: usize,
    input_scale: Vec<f64>,
    target_entropy: f64,
    pub(crate) actor: Network,
    pub(crate) actor_opt: AdamState,
    pub(crate) critics: Vec<Network>,
    pub(crate) critic_opts: Vec<AdamState>,
    pub(crate) targets: Vec<Network>,
    pub(crate) log_alpha: f64,
    pub(crate) alpha_opt: AdamState,
    pub(crate) gradient_rounds: u64,
    pub(crate) actor_updates: u64,
}

fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

impl SacEnsembleAgent {
    /// `input_scale` multiplies raw observations before they reach any network.
    pub fn new<R: Rng + ?Sized>(
        config: AgentConfig,
        obs_dim: usize,
        action_dim: usize,
        input_scale: Vec<f64>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        check_len("input_scale", obs_dim, input_scale.len())?;
        if input_scale.iter().any(|s| !s.is_finite()) {
            return Err(CoreError::InvalidConfig("input_scale must be finite".into()));
        }
        let policy_in = obs_dim + usize::from(config.uses_context());
        let mut actor_sizes = vec![policy_in];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(2 * action_dim);
        let mut critic_sizes = vec![policy_in + action_dim];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);

        let actor = Network::init(&actor_sizes, Activation::Relu, rng)?;
        let critics = (0..config.ensemble_size)
            .map(|_| Network::init(&critic_sizes, Activation::Relu, rng))
            .collect::<cheq_nn::Result<Vec<_>>>()?;
        let targets = critics.clone();
        Ok(Self {
            target_entropy: config.target_entropy.unwrap_or(-(action_dim as f64)),
            obs_dim,
            action_dim,
            input_scale,
            actor_opt: AdamState::new(actor.param_count()),
            critic_opts: critics.iter().map(|c| AdamState::new(c.param_count())).collect(),
            log_alpha: config.initial_alpha.ln(),
            alpha_opt: AdamState::new(1),
            actor,
            critics,
            targets,
            gradient_rounds: 0,
            actor_updates: 0,
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.log_alpha = alpha.ln();
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn actor(&self) -> &Network {
        &self.actor
    }

    pub fn critics(&self) -> &[Network] {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut [Network] {
        &mut self.critics
    }

    pub fn targets(&self) -> &[Network] {
        &self.targets
    }

    pub fn targets_mut(&mut self) -> &mut [Network] {
        &mut self.targets
    }

    pub fn actor_mut(&mut self) -> &mut Network {
        &mut self.actor
    }

    pub fn gradient_rounds(&self) -> u64 {
        self.gradient_rounds
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    pub fn policy_input_dim(&self) -> usize {
        self.obs_dim + usize::from(self.config.uses_context())
    }

    pub fn all_finite(&self) -> bool {
        self.actor.all_finite()
            && self.critics.iter().all(Network::all_finite)
            && self.targets.iter().all(Network::all_finite)
            && self.log_alpha.is_finite()
    }

    /// Scaled observations with the weight appended when the formulation uses it.
    pub fn policy_inputs(&self, obs: &[f64], lambdas: &[f64]) -> Result<Vec<f64>> {
        let batch = lambdas.len();
        check_len("observations", batch * self.obs_dim, obs.len())?;
        let ctx = self.config.uses_context();
        let mut out = Vec::with_capacity(batch * self.policy_input_dim());
        for (row, &lambda) in obs.chunks_exact(self.obs_dim).zip(lambdas) {
            out.extend(row.iter().zip(&self.input_scale).map(|(o, s)| o * s));
            if ctx {
                out.push(lambda);
            }
        }
        Ok(out)
    }

    /// Rows of `[policy input, action]`.
    pub fn critic_inputs(&self, policy_inputs: &[f64], actions: &[f64], batch: usize) -> Vec<f64> {
        let p = self.policy_input_dim();
        let mut out = Vec::with_capacity(batch * (p + self.action_dim));
        for (row, a) in policy_inputs.chunks_exact(p).zip(actions.chunks_exact(self.action_dim)) {
            out.extend_from_slice(row);
            out.extend_from_slice(a);
        }
        out
    }

    /// Mean and squashed log-std heads for a batch of policy inputs.
    pub(crate) fn policy_heads(&self, output: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.action_dim;
        let mut mean = Vec::with_capacity(output.len() / 2);
        let mut raw = Vec::with_capacity(output.len() / 2);
        for row in output.chunks_exact(2 * d) {
            mean.extend_from_slice(&row[..d]);
            raw.extend_from_slice(&row[d..]);
        }
        let log_std = raw.iter().map(|&r| squash_log_std(r)).collect();
        (mean, raw, log_std)
    }

    /// Reparameterized policy sample for one observation.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], lambda: f64, rng: &mut R) -> Result<GaussianPolicyOutput> {
        let noise = standard_normal(self.action_dim, rng);
        self.action_with_noise(obs, lambda, &noise)
    }

    pub fn action_with_noise(&self, obs: &[f64], lambda: f64, noise: &[f64]) -> Result<GaussianPolicyOutput> {
        let input = self.policy_inputs(obs, &[lambda])?;
        let out = self.actor.forward(&input)?;
        let (mean, _, log_std) = self.policy_heads(&out);
        Ok(sample_squashed_gaussian(&mean, &log_std, noise)?)
    }

    pub fn greedy_action(&self, obs: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let input = self.policy_inputs(obs, &[lambda])?;
        let out = self.actor.forward(&input)?;
        Ok(greedy_action(&out[..self.action_dim]))
    }

    /// Online ensemble predictions `Q_e(s, a, lambda)`.
    pub fn q_values(&self, obs: &[f64], lambda: f64, action: &[f64]) -> Result<Vec<f64>> {
        check_len("action", self.action_dim, action.len())?;
        let input = self.policy_inputs(obs, &[lambda])?;
        let x = self.critic_inputs(&input, action, 1);
        self.critics.iter().map(|c| Ok(c.forward(&x)?[0])).collect()
    }

    /// Draws `subset_size` distinct critic indices uniformly.
    pub fn sample_subset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        rand::seq::index::sample(rng, self.config.ensemble_size, self.config.subset_size).into_vec()
    }

    /// Bootstrap targets `r + gamma (min_{e in F} Qbar_e(s', a', lambda) - alpha log pi(a'|s', lambda))`
    /// with `a'` built from `noise` (`batch x action_dim`); terminal items get `y = r`.
    pub fn critic_targets_with_noise(&self, batch: &Batch, subset: &[usize], noise: &[f64]) -> Result<Vec<f64>> {
        if subset.is_empty() {
            return Err(CoreError::InvalidConfig("empty minimization subset".into()));
        }
        if let Some(&e) = subset.iter().find(|&&e| e >= self.targets.len()) {
            return Err(CoreError::InvalidConfig(format!("critic index {e} out of range")));
        }
        let n = batch.size;
        check_len("target noise", n * self.action_dim, noise.len())?;
        let inputs = self.policy_inputs(&batch.next_obs, &batch.lambdas)?;
        let out = self.actor.forward_batch(&inputs, n)?;
        let (mean, _, log_std) = self.policy_heads(out.output());
        let d = self.action_dim;
        let mut actions = Vec::with_capacity(n * d);
        let mut log_probs = Vec::with_capacity(n);
        for i in 0..n {
            let s = sample_squashed_gaussian(
                &mean[i * d..(i + 1) * d],
                &log_std[i * d..(i + 1) * d],
                &noise[i * d..(i + 1) * d],
            )?;
            actions.extend_from_slice(&s.sampled_action);
            log_probs.push(s.log_prob);
        }
        let x = self.critic_inputs(&inputs, &actions, n);
        let mut min_q = vec![f64::INFINITY; n];
        for &e in subset {
            let q = self.targets[e].forward_batch(&x, n)?;
            for (m, v) in min_q.iter_mut().zip(q.output()) {
                *m = m.min(*v);
            }
        }
        let alpha = self.alpha();
        let gamma = self.config.gamma;
        Ok((0..n)
            .map(|i| {
                if batch.dones[i] {
                    batch.rewards[i]
                } else {
                    batch.rewards[i] + gamma * (min_q[i] - alpha * log_probs[i])
                }
            })
            .collect())
    }

    pub fn critic_targets<R: Rng + ?Sized>(&self, batch: &Batch, subset: &[usize], rng: &mut R) -> Result<Vec<f64>> {
        let noise = standard_normal(batch.size * self.action_dim, rng);
        self.critic_targets_with_noise(batch, subset, &noise)
    }

    fn batch_critic_inputs(&self, batch: &Batch) -> Result<Vec<f64>> {
        let inputs = self.policy_inputs(&batch.obs, &batch.lambdas)?;
        check_len("batch actions", batch.size * self.action_dim, batch.actions.len())?;
        Ok(self.critic_inputs(&inputs, &batch.actions, batch.size))
    }

    /// Masked squared-error loss of critic `e` against `y` and its parameter gradient.
    pub fn critic_loss_grad(&self, e: usize, batch: &Batch, y: &[f64]) -> Result<CriticPass> {
        let x = self.batch_critic_inputs(batch)?;
        self.critic_loss_grad_on(e, &x, batch, y)
    }

    fn critic_loss_grad_on(&self, e: usize, x: &[f64], batch: &Batch, y: &[f64]) -> Result<CriticPass> {
        let n = batch.size;
        check_len("targets", n, y.len())?;
        let ens = self.config.ensemble_size;
        let critic = &self.critics[e];
        let cache = critic.forward_batch(x, n)?;
        let q = cache.output();
        let inv_n = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut upstream = vec![0.0; n];
        let mut active = 0;
        for i in 0..n {
            if batch.mask(i, e, ens) {
                let diff = q[i] - y[i];
                loss += diff * diff * inv_n;
                upstream[i] = 2.0 * diff * inv_n;
                active += 1;
            }
        }
        let grads = if active > 0 {
            critic.backward(&cache, &upstream, false)?.params
        } else {
            vec![0.0; critic.param_count()]
        };
        Ok(CriticPass { loss, grads, active })
    }

    /// One Adam step per critic with at least one unmasked item, then Polyak
    /// tracking of every target. Returns the mean loss of the stepped critics.
    pub fn critic_update(&mut self, batch: &Batch, y: &[f64], step: u64) -> Result<f64> {
        let x = self.batch_critic_inputs(batch)?;
        let mut total = 0.0;
        let mut stepped = 0;
        for e in 0..self.critics.len() {
            let pass = self.critic_loss_grad_on(e, &x, batch, y)?;
            if !pass.loss.is_finite() {
                return Err(CoreError::NonFinite { what: "critic loss", step });
            }
            if pass.active > 0 {
                adam_step(&mut self.critics[e], &pass.grads, &mut self.critic_opts[e], self.config.critic_lr)?;
                total += pass.loss;
                stepped += 1;
            }
            self.targets[e].polyak_update(&self.critics[e], self.config.tau)?;
        }
        self.gradient_rounds += 1;
        Ok(if stepped > 0 { total / stepped as f64 } else { 0.0 })
    }

    /// Actor loss `(1/|B|) sum_i (alpha log pi(a_i|s_i) - Qred(s_i, a_i))` with
    /// reparameterized actions from `noise`, and its parameter gradient.
    pub fn actor_loss_grad(&self, batch: &Batch, noise: &[f64]) -> Result<ActorPass> {
        let n = batch.size;
        let d = self.action_dim;
        check_len("actor noise", n * d, noise.len())?;
        let inputs = self.policy_inputs(&batch.obs, &batch.lambdas)?;
        let cache = self.actor.forward_batch(&inputs, n)?;
        let (mean, raw, log_std) = self.policy_heads(cache.output());
        let mut samples = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n * d);
        for i in 0..n {
            let s = sample_squashed_gaussian(
                &mean[i * d..(i + 1) * d],
                &log_std[i * d..(i + 1) * d],
                &noise[i * d..(i + 1) * d],
            )?;
            actions.extend_from_slice(&s.sampled_action);
            samples.push(s);
        }
        let x = self.critic_inputs(&inputs, &actions, n);
        let p = self.policy_input_dim();
        let width = p + d;
        let caches = self
            .critics
            .iter()
            .map(|c| c.forward_batch(&x, n))
            .collect::<cheq_nn::Result<Vec<_>>>()?;
        let inv_n = 1.0 / n as f64;
        let ens = self.critics.len();
        // d loss / d Q_e per item
        let mut upstreams = vec![vec![0.0; n]; ens];
        let mut q_red = vec![0.0; n];
        for i in 0..n {
            match self.config.actor_q {
                QReduction::Mean => {
                    for e in 0..ens {
                        q_red[i] += caches[e].output()[i] / ens as f64;
                        upstreams[e][i] = -inv_n / ens as f64;
                    }
                }
                QReduction::Min => {
                    let (arg, val) = (0..ens)
                        .map(|e| (e, caches[e].output()[i]))
                        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
                    q_red[i] = val;
                    upstreams[arg][i] = -inv_n;
                }
            }
        }
        let mut d_action = vec![0.0; n * d];
        for e in 0..ens {
            let g = self.critics[e].backward(&caches[e], &upstreams[e], true)?;
            let gi = g.input.expect("input gradient requested");
            for i in 0..n {
                for j in 0..d {
                    d_action[i * d + j] += gi[i * width + p + j];
                }
            }
        }
        let alpha = self.alpha();
        let mut upstream = vec![0.0; n * 2 * d];
        let mut loss = 0.0;
        let mut log_probs = Vec::with_capacity(n);
        for (i, s) in samples.iter().enumerate() {
            loss += (alpha * s.log_prob - q_red[i]) * inv_n;
            log_probs.push(s.log_prob);
            let (d_mean, d_log_std) = s.backward(&noise[i * d..(i + 1) * d], &d_action[i * d..(i + 1) * d], alpha * inv_n);
            for j in 0..d {
                upstream[i * 2 * d + j] = d_mean[j];
                upstream[i * 2 * d + d + j] = d_log_std[j] * squash_log_std_grad(raw[i * d + j]);
            }
        }
        let grads = self.actor.backward(&cache, &upstream, false)?.params;
        Ok(ActorPass { loss, grads, log_probs })
    }

    /// Actor step followed by the temperature step on `log alpha` with
    /// gradient `mean(alpha (-log pi - H_t))`.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R, step: u64) -> Result<(f64, f64, f64)> {
        let noise = standard_normal(batch.size * self.action_dim, rng);
        let pass = self.actor_loss_grad(batch, &noise)?;
        if !pass.loss.is_finite() || pass.log_probs.iter().any(|l| !l.is_finite()) {
            return Err(CoreError::NonFinite { what: "actor objective", step });
        }
        adam_step(&mut self.actor, &pass.grads, &mut self.actor_opt, self.config.actor_lr)?;
        let n = pass.log_probs.len() as f64;
        let entropy = -pass.log_probs.iter().sum::<f64>() / n;
        let alpha = self.alpha();
        let grad = alpha * (entropy - self.target_entropy);
        let mut la = [self.log_alpha];
        self.alpha_opt.step(&mut la, &[grad], self.config.alpha_lr)?;
        self.log_alpha = la[0];
        self.actor_updates += 1;
        Ok((-pass.loss, self.alpha(), entropy))
    }

    /// `G` critic rounds on fresh minibatches and fresh subsets, then one actor
    /// and temperature step on the last minibatch.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buffer: &crate::hybrid::ReplayBuffer,
        rng: &mut R,
        step: u64,
    ) -> Result<UpdateStats> {
        let mut loss_sum = 0.0;
        let mut last = None;
        for _ in 0..self.config.utd_ratio {
            let batch = buffer.sample(self.config.batch_size, rng)?;
            let subset = self.sample_subset(rng);
            let y = self.critic_targets(&batch, &subset, rng)?;
            loss_sum += self.critic_update(&batch, &y, step)?;
            last = Some(batch);
        }
        let batch = last.expect("utd_ratio >= 1");
        let (actor_objective, alpha, entropy) = self.actor_update(&batch, rng, step)?;
        if !self.all_finite() {
            return Err(CoreError::NonFinite { what: "network parameters", step });
        }
        Ok(UpdateStats {
            critic_loss_mean: loss_sum / self.config.utd_ratio as f64,
            actor_objective,
            alpha,
            entropy,
        })
    }
}
