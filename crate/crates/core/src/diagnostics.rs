//! Finite-difference audits of the full critic and actor objectives.

use cheq_nn::gradcheck::{check_gradient, relu_signs, FdReport, FdTolerance};
use cheq_nn::sample_squashed_gaussian;

use crate::agent::{QReduction, SacEnsembleAgent};
use crate::error::Result;
use crate::hybrid::Batch;

/// Every parameter of critic `e` against the masked squared-error loss.
pub fn check_critic_objective(
    agent: &SacEnsembleAgent,
    e: usize,
    batch: &Batch,
    y: &[f64],
    tol: &FdTolerance,
) -> Result<FdReport> {
    let analytic = agent.critic_loss_grad(e, batch, y)?.grads;
    let inputs = agent.policy_inputs(&batch.obs, &batch.lambdas)?;
    let x = agent.critic_inputs(&inputs, &batch.actions, batch.size);
    let mut probe = agent.clone();
    let count = analytic.len();
    Ok(check_gradient(&analytic, 0..count, tol, |i, d| {
        let orig = probe.critics[e].params()[i];
        probe.critics[e].params_mut()[i] = orig + d;
        let loss = probe.critic_loss_grad(e, batch, y).expect("shapes fixed").loss;
        let sig = relu_signs(&probe.critics[e], &x, batch.size);
        probe.critics[e].params_mut()[i] = orig;
        (loss, sig)
    }))
}

/// ReLU pattern of the actor and of every critic evaluated at the actor's
/// reparameterized actions, plus the arg-min pattern under min reduction.
fn actor_signature(agent: &SacEnsembleAgent, batch: &Batch, noise: &[f64]) -> Vec<bool> {
    let n = batch.size;
    let d = agent.action_dim();
    let inputs = agent.policy_inputs(&batch.obs, &batch.lambdas).expect("shapes fixed");
    let mut sig = relu_signs(&agent.actor, &inputs, n);
    let out = agent.actor.forward_batch(&inputs, n).expect("shapes fixed");
    let (mean, _, log_std) = agent.policy_heads(out.output());
    let mut actions = Vec::with_capacity(n * d);
    for i in 0..n {
        let r = i * d..(i + 1) * d;
        let s = sample_squashed_gaussian(&mean[r.clone()], &log_std[r.clone()], &noise[r]).expect("shapes fixed");
        actions.extend(s.sampled_action);
    }
    let x = agent.critic_inputs(&inputs, &actions, n);
    let mut q = Vec::new();
    for c in &agent.critics {
        sig.extend(relu_signs(c, &x, n));
        q.push(c.forward_batch(&x, n).expect("shapes fixed").output().to_vec());
    }
    if agent.config().actor_q == QReduction::Min {
        for i in 0..n {
            let arg = (0..q.len()).fold(0, |best, e| if q[e][i] < q[best][i] { e } else { best });
            sig.extend((0..q.len()).map(|e| e == arg));
        }
    }
    sig
}

/// Every actor parameter against the entropy-regularized actor loss with
/// the reparameterization noise held fixed.
pub fn check_actor_objective(agent: &SacEnsembleAgent, batch: &Batch, noise: &[f64], tol: &FdTolerance) -> Result<FdReport> {
    let analytic = agent.actor_loss_grad(batch, noise)?.grads;
    let mut probe = agent.clone();
    let count = analytic.len();
    Ok(check_gradient(&analytic, 0..count, tol, |i, d| {
        let orig = probe.actor.params()[i];
        probe.actor.params_mut()[i] = orig + d;
        let loss = probe.actor_loss_grad(batch, noise).expect("shapes fixed").loss;
        let sig = actor_signature(&probe, batch, noise);
        probe.actor.params_mut()[i] = orig;
        (loss, sig)
    }))
}
