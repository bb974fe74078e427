use cheq_core::checkpoint::{load_bundle, save_bundle};
use cheq_core::train::uncertainty_at;
use cheq_core::{
    AdaptSignal, AgentConfig, Batch, CartPoleTask, Formulation, MixingKind, NullRecorder, QReduction, ReplayBuffer,
    SacEnsembleAgent, Task, TrainSettings, Trainer, Transition, Variant, WeightAdaptor, WeightConfig,
};
use cheq_env::CartPoleParams;
use cheq_nn::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normals(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn small_config() -> AgentConfig {
    AgentConfig {
        hidden: vec![16, 16],
        batch_size: 16,
        learning_starts: 50,
        lambda_warmup_steps: 0,
        ..Default::default()
    }
}

fn agent(cfg: AgentConfig, obs_dim: usize, act_dim: usize, seed: u64) -> SacEnsembleAgent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SacEnsembleAgent::new(cfg, obs_dim, act_dim, vec![1.0; obs_dim], &mut rng).unwrap()
}

fn batch(n: usize, obs_dim: usize, act_dim: usize, ens: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Batch {
        size: n,
        obs: normals(n * obs_dim, &mut rng),
        actions: (0..n * act_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        lambdas: (0..n).map(|_| rng.random_range(0.2..1.0)).collect(),
        rewards: normals(n, &mut rng),
        next_obs: normals(n * obs_dim, &mut rng),
        dones: vec![false; n],
        masks: (0..n * ens).map(|_| rng.random_bool(0.8)).collect(),
    }
}

/// Zero weights with a constant output bias.
fn make_constant(net: &mut Network, value: f64) {
    let params = net.params_mut();
    params.iter_mut().for_each(|p| *p = 0.0);
    *params.last_mut().unwrap() = value;
}

fn cartpole() -> CartPoleTask {
    CartPoleTask::new(CartPoleParams::default())
}

fn trainer(cfg: AgentConfig, settings: TrainSettings, seed: u64) -> Trainer<CartPoleTask> {
    Trainer::new(cartpole(), cartpole(), cfg, settings, seed).unwrap()
}

#[test]
fn terminal_target_is_the_reward() {
    for (gamma, alpha) in [(0.99, 1.0), (0.5, 0.01), (0.9, 7.0)] {
        let cfg = AgentConfig { gamma, ..small_config() };
        let mut a = agent(cfg, 4, 2, 1);
        a.set_alpha(alpha);
        let mut b = batch(32, 4, 2, 5, 2);
        b.dones = vec![true; 32];
        b.rewards[0] = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = a.critic_targets(&b, &[0, 3], &mut rng).unwrap();
        assert_eq!(y, b.rewards);
        assert_eq!(y[0], 2.0);
    }
}

#[test]
fn target_substitutes_the_subset_minimum() {
    let cfg = AgentConfig {
        ensemble_size: 2,
        actor_q: QReduction::Min,
        ..small_config()
    };
    let mut a = agent(cfg, 3, 1, 4);
    make_constant(&mut a.targets_mut()[0], 2.0);
    make_constant(&mut a.targets_mut()[1], 3.0);
    a.set_alpha(0.0);
    let mut b = batch(4, 3, 1, 2, 5);
    b.rewards = vec![1.0; 4];
    let noise = vec![0.3, -1.2, 0.0, 2.1];
    let y = a.critic_targets_with_noise(&b, &[0, 1], &noise).unwrap();
    for v in y {
        assert!((v - 2.98).abs() < 1e-12, "{v}");
    }
}

#[test]
fn temperature_shifts_target_by_scaled_log_prob() {
    let mut a = agent(small_config(), 4, 2, 6);
    let b = batch(8, 4, 2, 5, 7);
    let noise = normals(16, &mut ChaCha8Rng::seed_from_u64(8));
    a.set_alpha(1.0);
    let y1 = a.critic_targets_with_noise(&b, &[1, 4], &noise).unwrap();
    a.set_alpha(0.0);
    let y0 = a.critic_targets_with_noise(&b, &[1, 4], &noise).unwrap();
    for i in 0..8 {
        let s = a
            .action_with_noise(&b.next_obs[i * 4..(i + 1) * 4], b.lambdas[i], &noise[i * 2..(i + 1) * 2])
            .unwrap();
        let expected = a.config().gamma * s.log_prob;
        assert!((y0[i] - y1[i] - expected).abs() < 1e-9, "{} vs {expected}", y0[i] - y1[i]);
    }
}

#[test]
fn masked_items_do_not_move_their_critic() {
    let a = agent(small_config(), 4, 1, 9);
    let mut b = batch(32, 4, 1, 5, 10);
    let e = 2;
    let masked: Vec<usize> = (0..32).filter(|&i| !b.mask(i, e, 5)).collect();
    assert!(!masked.is_empty());
    let i = masked[0];
    b.masks[i * 5 + e] = false;
    let y: Vec<f64> = normals(32, &mut ChaCha8Rng::seed_from_u64(11));
    let mut y_perturbed = y.clone();
    for &m in &masked {
        y_perturbed[m] += 5.0 * (m as f64 + 1.0);
    }
    let g1 = a.critic_loss_grad(e, &b, &y).unwrap();
    let g2 = a.critic_loss_grad(e, &b, &y_perturbed).unwrap();
    assert_eq!(g1.grads, g2.grads);
    assert_eq!(g1.loss.to_bits(), g2.loss.to_bits());

    let mut a1 = a.clone();
    let mut a2 = a.clone();
    a1.critic_update(&b, &y, 1).unwrap();
    a2.critic_update(&b, &y_perturbed, 1).unwrap();
    assert_eq!(a1.critics()[e].params(), a2.critics()[e].params());
    assert_eq!(a1.targets()[e].params(), a2.targets()[e].params());
}

#[test]
fn fully_masked_critic_skips_its_step() {
    let mut a = agent(small_config(), 4, 1, 12);
    let mut b = batch(16, 4, 1, 5, 13);
    for i in 0..16 {
        b.masks[i * 5] = false;
        b.masks[i * 5 + 1] = true;
    }
    let before = a.critics()[0].params().to_vec();
    let before_other = a.critics()[1].params().to_vec();
    let y = normals(16, &mut ChaCha8Rng::seed_from_u64(14));
    let pass = a.critic_loss_grad(0, &b, &y).unwrap();
    assert_eq!(pass.active, 0);
    assert_eq!(pass.loss, 0.0);
    let loss = a.critic_update(&b, &y, 1).unwrap();
    assert!(loss.is_finite() && loss > 0.0);
    assert_eq!(a.critics()[0].params(), &before[..]);
    assert_ne!(a.critics()[1].params(), &before_other[..]);
    assert!(a.all_finite());
}

#[test]
fn subset_frequencies_match_f_over_e() {
    let a = agent(small_config(), 2, 1, 15);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let draws = 10_000;
    let mut counts = [0usize; 5];
    for _ in 0..draws {
        let s = a.sample_subset(&mut rng);
        assert_eq!(s.len(), 2);
        assert_ne!(s[0], s[1]);
        for e in s {
            counts[e] += 1;
        }
    }
    for c in counts {
        let freq = c as f64 / draws as f64;
        assert!((freq - 0.4).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn gradient_rounds_follow_the_utd_ratio() {
    let cfg = AgentConfig {
        utd_ratio: 20,
        ..small_config()
    };
    let settings = TrainSettings {
        total_steps: 90,
        ..Default::default()
    };
    let mut tr = trainer(cfg, settings, 17);
    tr.run(&mut NullRecorder).unwrap();
    let post = 90 - 50;
    assert_eq!(tr.agent().gradient_rounds(), 20 * post);
    assert_eq!(tr.agent().actor_updates(), post);
    assert_eq!(tr.first_update_step(), Some(51));
}

#[test]
fn first_update_follows_the_random_phase() {
    let cfg = AgentConfig {
        hidden: vec![8],
        batch_size: 32,
        ..Default::default()
    };
    assert_eq!(cfg.learning_starts, 1000);
    let settings = TrainSettings {
        total_steps: 1002,
        ..Default::default()
    };
    let mut tr = trainer(cfg, settings, 18);
    while tr.step_count() < 1000 {
        let out = tr.train_step(&mut NullRecorder).unwrap();
        assert!(out.a_rl.iter().all(|a| (-1.0..=1.0).contains(a)));
    }
    assert_eq!(tr.agent().gradient_rounds(), 0);
    assert_eq!(tr.first_update_step(), None);
    tr.train_step(&mut NullRecorder).unwrap();
    assert_eq!(tr.first_update_step(), Some(1001));
    assert_eq!(tr.agent().gradient_rounds(), 1);
}

fn stored_action_case(formulation: Formulation) {
    let cfg = AgentConfig {
        formulation,
        ..small_config()
    };
    let settings = TrainSettings {
        total_steps: 200,
        adaptor: WeightAdaptor::Fixed { lambda: 0.5 },
        ..Default::default()
    };
    let mut tr = trainer(cfg, settings, 19);
    for _ in 0..120 {
        let out = tr.train_step(&mut NullRecorder).unwrap();
        let stored = tr.buffer().get(tr.buffer().len() - 1).unwrap();
        let expected = if formulation == Formulation::MixedAction { &out.a_mix } else { &out.a_rl };
        assert_eq!(&stored.action, expected);
        assert_ne!(out.a_rl, out.a_mix);
        assert_eq!(stored.lambda.to_bits(), out.lambda.to_bits());
        assert_eq!(stored.obs, out.obs);
        assert_eq!(stored.reward.to_bits(), out.result.reward.to_bits());
    }
}

#[test]
fn buffer_stores_the_rl_action() {
    stored_action_case(Formulation::Contextualized);
    stored_action_case(Formulation::StationaryHybrid);
}

#[test]
fn mixed_action_formulation_stores_the_mixed_action() {
    stored_action_case(Formulation::MixedAction);
}

#[test]
fn weight_restarts_at_its_minimum_on_reset() {
    let cfg = AgentConfig {
        lambda_warmup_steps: 5000,
        ..small_config()
    };
    let settings = TrainSettings {
        total_steps: 10_000,
        adaptor: WeightAdaptor::Cheq(WeightConfig::default()),
        ..Default::default()
    };
    let mut tr = trainer(cfg, settings, 20);
    assert_eq!(tr.lambda(), 0.2);
    let mut resets = 0;
    while resets < 5 {
        let out = tr.train_step(&mut NullRecorder).unwrap();
        if out.step > 1 && out.step < 5000 && !out.result.episode_over() {
            assert!((0.2..0.3).contains(&out.next_lambda), "{}", out.next_lambda);
        }
        if out.result.episode_over() {
            assert_eq!(tr.lambda(), 0.2);
            resets += 1;
        }
    }
}

#[test]
fn identical_critics_hand_control_to_the_agent() {
    let cfg = small_config();
    let mut a = agent(cfg, 4, 1, 21);
    let first = a.critics()[0].clone();
    for c in a.critics_mut() {
        *c = first.clone();
    }
    let adaptor = WeightAdaptor::Cheq(WeightConfig::default());
    let obs = [0.01, -0.02, 0.03, 0.0];
    let u = uncertainty_at(&a, &obs, 0.2, &[0.4]).unwrap();
    assert_eq!(u, 0.0);
    let next = adaptor.next(&AdaptSignal {
        step: 6000,
        uncertainty: u,
        td_error: 0.0,
    });
    assert_eq!(next, 1.0);
}

#[test]
fn disagreement_above_u_max_defers_to_the_prior() {
    let adaptor = WeightAdaptor::Cheq(WeightConfig::default());
    let mut a = agent(AgentConfig::default(), 4, 1, 22);
    // widen the spread of output layers so every state exceeds u_max
    for c in a.critics_mut() {
        let n = c.param_count();
        let last_in = c.layer_sizes()[c.layer_sizes().len() - 2];
        for p in &mut c.params_mut()[n - last_in - 1..] {
            *p *= 40.0;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..200 {
        let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-0.2..0.2)).collect();
        let act = [rng.random_range(-1.0..1.0)];
        let u = uncertainty_at(&a, &obs, 0.2, &act).unwrap();
        let next = adaptor.next(&AdaptSignal {
            step: 6000,
            uncertainty: u,
            td_error: 0.0,
        });
        assert!(u > 0.15, "{u}");
        assert_eq!(next, 0.2);
    }
}

#[test]
fn constant_critic_without_entropy_gives_no_actor_gradient() {
    let mut a = agent(small_config(), 4, 2, 24);
    for c in a.critics_mut() {
        make_constant(c, 1.5);
    }
    a.set_alpha(0.0);
    let b = batch(16, 4, 2, 5, 25);
    let noise = normals(32, &mut ChaCha8Rng::seed_from_u64(26));
    let pass = a.actor_loss_grad(&b, &noise).unwrap();
    assert!(pass.grads.iter().all(|g| *g == 0.0));
    assert!((pass.loss + 1.5).abs() < 1e-12);
}

#[test]
fn temperature_follows_the_entropy_target() {
    let b = batch(64, 4, 2, 5, 27);
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    for (target, rises) in [(10.0, true), (-10.0, false)] {
        let cfg = AgentConfig {
            target_entropy: Some(target),
            ..small_config()
        };
        let mut a = agent(cfg, 4, 2, 29);
        let before = a.alpha();
        for step in 0..5 {
            a.actor_update(&b, &mut rng, step).unwrap();
        }
        assert_eq!(a.alpha() > before, rises, "target {target}: {before} -> {}", a.alpha());
    }
}

#[test]
fn context_input_changes_critic_output() {
    let a = agent(small_config(), 4, 1, 30);
    let obs = [0.1, 0.2, -0.1, 0.05];
    let q_lo = a.q_values(&obs, 0.2, &[0.3]).unwrap();
    let q_hi = a.q_values(&obs, 0.9, &[0.3]).unwrap();
    assert!(q_lo.iter().zip(&q_hi).all(|(x, y)| x != y));
    assert_eq!(a.critics()[0].input_dim(), 4 + 1 + 1);
    assert_eq!(a.actor().input_dim(), 5);

    for formulation in [Formulation::StationaryHybrid, Formulation::MixedAction] {
        let cfg = AgentConfig {
            formulation,
            ..small_config()
        };
        let a = agent(cfg, 4, 1, 31);
        assert_eq!(a.critics()[0].input_dim(), 4 + 1);
        assert_eq!(a.actor().input_dim(), 4);
        let q_lo = a.q_values(&obs, 0.2, &[0.3]).unwrap();
        let q_hi = a.q_values(&obs, 0.9, &[0.3]).unwrap();
        assert_eq!(q_lo, q_hi);
    }
}

#[test]
fn contradictory_formulation_is_rejected() {
    let cfg = AgentConfig {
        formulation: Formulation::MixedAction,
        context_input: Some(true),
        ..small_config()
    };
    assert!(cfg.validate().is_err());
    let sac = Variant::Sac.assemble(
        AgentConfig {
            formulation: Formulation::StationaryHybrid,
            ..small_config()
        },
        TrainSettings::default(),
    );
    assert!(sac.is_err());
}

#[test]
fn unit_weight_hybrid_reproduces_sac() {
    let base = AgentConfig {
        ensemble_size: 2,
        actor_q: QReduction::Min,
        ..small_config()
    };
    let settings = TrainSettings {
        total_steps: 300,
        ..Default::default()
    };
    let (sac_cfg, sac_settings) = Variant::Sac.assemble(base.clone(), settings.clone()).unwrap();
    let (hyb_cfg, hyb_settings) = Variant::FixedHybrid { lambda: 1.0 }.assemble(base, settings).unwrap();
    assert_eq!(sac_cfg, hyb_cfg);
    let mut sac = trainer(sac_cfg, sac_settings, 32);
    let mut hyb = trainer(hyb_cfg, hyb_settings, 32);
    for _ in 0..300 {
        let a = sac.train_step(&mut NullRecorder).unwrap();
        let b = hyb.train_step(&mut NullRecorder).unwrap();
        assert_eq!(a.a_rl, b.a_rl);
        assert_eq!(a.a_mix, a.a_rl);
        assert_eq!(a.result, b.result);
        assert_eq!(a.lambda, 1.0);
        assert_eq!(b.next_lambda, 1.0);
    }
    assert_eq!(sac.agent().actor().params(), hyb.agent().actor().params());
}

#[test]
fn fixed_adaptor_is_constant() {
    let settings = TrainSettings {
        total_steps: 500,
        adaptor: WeightAdaptor::Fixed { lambda: 0.7 },
        ..Default::default()
    };
    let mut tr = trainer(small_config(), settings, 33);
    for _ in 0..500 {
        let out = tr.train_step(&mut NullRecorder).unwrap();
        assert_eq!(out.lambda, 0.7);
        assert_eq!(out.next_lambda, 0.7);
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let run = |seed| {
        let settings = TrainSettings {
            total_steps: 400,
            eval_every_episodes: 2,
            adaptor: WeightAdaptor::Cheq(WeightConfig::default()),
            ..Default::default()
        };
        let mut tr = trainer(small_config(), settings, seed);
        let mut rec = cheq_core::MemoryRecorder::default();
        let out = tr.run(&mut rec).unwrap();
        (out, rec.steps, rec.episodes, rec.evals, rec.updates)
    };
    let a = run(34);
    let b = run(34);
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert_eq!(a.3, b.3);
    assert_eq!(a.4, b.4);
    assert_ne!(a.1, run(35).1);
}

#[test]
fn checkpoint_round_trip_preserves_the_agent() {
    let settings = TrainSettings {
        total_steps: 120,
        ..Default::default()
    };
    let mut tr = trainer(small_config(), settings.clone(), 36);
    tr.run(&mut NullRecorder).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let original = tr.agent().clone();
    save_bundle(dir.path(), &original, 120, &settings.adaptor, MixingKind::Regularized, serde_json::json!({"seed": 36})).unwrap();
    let (mut loaded, manifest) = load_bundle(dir.path()).unwrap();
    assert_eq!(manifest.step, 120);
    assert_eq!(manifest.run["seed"], 36);
    assert_eq!(loaded.actor().params(), original.actor().params());
    for e in 0..5 {
        assert_eq!(loaded.critics()[e].params(), original.critics()[e].params());
        assert_eq!(loaded.targets()[e].params(), original.targets()[e].params());
    }
    assert_eq!(loaded.alpha().to_bits(), original.alpha().to_bits());
    assert_eq!(loaded.gradient_rounds(), original.gradient_rounds());

    let mut buffer = ReplayBuffer::new(64, 4, 1, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..64 {
        buffer
            .push(Transition {
                obs: normals(4, &mut rng),
                action: vec![rng.random_range(-1.0..1.0)],
                lambda: 0.5,
                reward: 1.0,
                next_obs: normals(4, &mut rng),
                done: false,
                masks: vec![true; 5],
            })
            .unwrap();
    }
    let mut original = original;
    let s1 = original.update(&buffer, &mut ChaCha8Rng::seed_from_u64(38), 121).unwrap();
    let s2 = loaded.update(&buffer, &mut ChaCha8Rng::seed_from_u64(38), 121).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(loaded.actor().params(), original.actor().params());
}

#[test]
fn cartpole_task_exposes_the_constant_prior() {
    let mut task = cartpole();
    task.reset(&mut ChaCha8Rng::seed_from_u64(39), cheq_core::ResetMode::Train);
    assert_eq!(task.prior_action(), vec![-0.5]);
    assert_eq!(task.obs_dim(), 4);
}
