use cheq_core::priors::{stanley_law, tracking_errors};
use cheq_core::*;
use cheq_env::{RaceCarState, Track, VehicleParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXACT: f64 = 1e-9;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn mixing_endpoints_and_midpoint() {
    let p = [0.2, -0.4];
    let r = [0.6, 0.0];
    assert_eq!(mix(&p, &r, 0.0).unwrap(), p.to_vec());
    assert_eq!(mix(&p, &r, 1.0).unwrap(), r.to_vec());
    let m = mix(&p, &r, 0.5).unwrap();
    assert!(close(m[0], 0.4, EXACT) && close(m[1], -0.2, EXACT));
    assert!(mix(&p, &r, 1.2).is_err());
    assert!(mix(&p, &[0.1], 0.5).is_err());
}

#[test]
fn residual_mixing() {
    assert_eq!(mix_residual(&[0.2], &[0.6], 0.0).unwrap(), vec![0.2]);
    assert!(close(mix_residual(&[0.2], &[0.6], 0.5).unwrap()[0], 0.5, EXACT));
    assert_eq!(mix_residual(&[0.9], &[1.0], 1.0).unwrap(), vec![1.0]);
}

fn brute_std(q: &[f64]) -> f64 {
    let mean: f64 = q.iter().sum::<f64>() / q.len() as f64;
    let mut var = 0.0;
    for v in q {
        var += (v - mean).powi(2);
    }
    (var / q.len() as f64).sqrt()
}

#[test]
fn uncertainty_examples() {
    assert_eq!(ensemble_uncertainty(&[1.0; 5]).unwrap(), 0.0);
    assert!(close(ensemble_uncertainty(&[0.0, 2.0]).unwrap(), 1.0, EXACT));
    assert!(close(ensemble_uncertainty(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 2f64.sqrt(), EXACT));
    assert!(ensemble_uncertainty(&[1.0]).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let q: Vec<f64> = (0..5).map(|_| rand::Rng::random_range(&mut rng, -50.0..50.0)).collect();
        assert!(close(ensemble_uncertainty(&q).unwrap(), brute_std(&q), EXACT));
    }
}

#[test]
fn cheq_weight_knots() {
    let cfg = WeightConfig::default();
    assert_eq!(adapt_weight_cheq(0.02, &cfg), 1.0);
    assert!(close(adapt_weight_cheq(0.03, &cfg), 1.0, EXACT));
    assert!(close(adapt_weight_cheq(0.15, &cfg), 0.2, EXACT));
    assert!(close(adapt_weight_cheq(0.09, &cfg), 0.6, EXACT));
    assert_eq!(adapt_weight_cheq(3.0, &cfg), 0.2);
}

#[test]
fn schedule_weight() {
    assert_eq!(adapt_weight_schedule(0, 1000), 0.0);
    assert_eq!(adapt_weight_schedule(1000, 1000), 1.0);
    assert!(close(adapt_weight_schedule(250, 1000), 0.25, EXACT));
    assert_eq!(adapt_weight_schedule(5000, 1000), 1.0);
}

#[test]
fn core_weight() {
    assert_eq!(adapt_weight_core(0.0, 7.0, 0.02), 1.0);
    // 7 (1 - e^-1) = 4.4248439118, so the weight is 1 / 5.4248439118
    assert!(close(adapt_weight_core(50.0, 7.0, 0.02), 0.184_337_100_985_5, EXACT));
    assert!(close(adapt_weight_core(-50.0, 7.0, 0.02), 0.184_337_100_985_5, EXACT));
    assert!(close(adapt_weight_core(1e9, 7.0, 0.02), 0.125, EXACT));
}

#[test]
fn bernoulli_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert!(sample_bernoulli_masks(5, 1.0, &mut rng).into_iter().all(|m| m));
    let n = 100_000;
    let draws: Vec<Vec<bool>> = (0..n).map(|_| sample_bernoulli_masks(5, 0.8, &mut rng)).collect();
    for e in 0..5 {
        let mean = draws.iter().filter(|d| d[e]).count() as f64 / n as f64;
        assert!(close(mean, 0.8, 0.01), "critic {e}: {mean}");
    }
    // pairwise correlation between critics
    for a in 0..5 {
        for b in (a + 1)..5 {
            let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
            for d in &draws {
                let (x, y) = (f64::from(u8::from(d[a])), f64::from(u8::from(d[b])));
                sa += x;
                sb += y;
                sab += x * y;
            }
            let nf = n as f64;
            let cov = sab / nf - (sa / nf) * (sb / nf);
            let corr = cov / ((sa / nf) * (1.0 - sa / nf) * (sb / nf) * (1.0 - sb / nf)).sqrt();
            assert!(corr.abs() < 0.02, "critics {a},{b}: {corr}");
        }
    }
    let mut r1 = ChaCha8Rng::seed_from_u64(9);
    let mut r2 = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        assert_eq!(sample_bernoulli_masks(5, 0.8, &mut r1), sample_bernoulli_masks(5, 0.8, &mut r2));
    }
}

fn transition(k: usize, lambda: f64) -> Transition {
    Transition {
        obs: vec![k as f64],
        action: vec![0.0],
        lambda,
        reward: k as f64,
        next_obs: vec![0.0],
        done: false,
        masks: vec![true],
    }
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(100, 1, 1, 1).unwrap();
    for k in 0..100 {
        buf.push(transition(k, 0.2 + 0.001 * k as f64 + 1e-13)).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut counts = [0usize; 100];
    let mut drawn = 0;
    while drawn < 100_000 {
        let batch = buf.sample(100, &mut rng).unwrap();
        for i in 0..batch.size {
            let k = batch.rewards[i] as usize;
            counts[k] += 1;
            assert_eq!(batch.lambdas[i].to_bits(), (0.2 + 0.001 * k as f64 + 1e-13).to_bits());
        }
        drawn += batch.size;
    }
    let expected = drawn as f64 / 100.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 99 degrees of freedom
    assert!(chi2 < 134.64, "chi-square {chi2}");
}

#[test]
fn replay_evicts_oldest() {
    let mut buf = ReplayBuffer::new(10, 1, 1, 1).unwrap();
    for k in 0..11 {
        buf.push(transition(k, 0.5)).unwrap();
    }
    assert_eq!(buf.len(), 10);
    assert!((0..10).all(|i| buf.get(i).unwrap().reward != 0.0));
}

#[test]
fn constant_force_prior_examples() {
    assert_eq!(constant_force_prior(), -0.5);
    assert_eq!(constant_force_prior() * cheq_env::CartPoleParams::default().max_force, -5.0);
    let mut task = CartPoleTask::new(cheq_env::CartPoleParams::default());
    let a = task.prior_action();
    task.env_mut().set_state(cheq_env::CartPoleState { x: 1.0, x_dot: -2.0, theta: 0.1, theta_dot: 0.3 });
    assert_eq!(task.prior_action(), a);
}

#[test]
fn stanley_examples() {
    let g = StanleyGains::default();
    assert_eq!(stanley_lateral(0.0, 0.0, 5.0, &g, 0.5), 0.0);
    for v in [0.0, 1.0, 8.0, 30.0] {
        assert!(close(stanley_lateral(0.1, 0.0, v, &g, 0.5), 0.1, EXACT));
    }
    assert!(close(stanley_lateral(0.0, 1.0, 0.0, &g, 0.6), 0.5, EXACT));
    assert_eq!(stanley_lateral(0.0, 10.0, 0.0, &g, 0.5), 0.5);
}

#[test]
fn target_velocity_examples() {
    let g = StanleyGains::default();
    assert!(close(target_velocity(10.0, &g), 4.0, EXACT));
    assert_eq!(target_velocity(100.0, &g), 8.0);
    assert_eq!(target_velocity(1000.0, &g), 8.0);
}

#[test]
fn gain_schedule_examples() {
    let g = StanleyGains::default();
    assert!(close(gain_schedule(8.0, &g), 0.25, EXACT));
    assert!(close(gain_schedule(28.0, &g), 0.05, EXACT));
    assert!(close(gain_schedule(18.0, &g), 0.15, EXACT));
    assert_eq!(gain_schedule(0.0, &g), 0.25);
    assert_eq!(gain_schedule(50.0, &g), 0.05);
}

#[test]
fn longitudinal_examples() {
    assert_eq!(longitudinal_control(8.0, 8.0, 0.25), (0.0, 0.0));
    let (t, b) = longitudinal_control(6.0, 8.0, 0.25);
    assert!(close(t, 0.5, EXACT) && b == 0.0);
    let (t, b) = longitudinal_control(12.0, 8.0, 0.25);
    assert!(t == 0.0 && close(b, 1.0, EXACT));
}

fn long_straight() -> Track {
    Track::stadium(600.0, 60.0, 0.5, 6.0).unwrap()
}

#[test]
fn racing_prior_examples() {
    let track = long_straight();
    let vp = VehicleParams::default();
    let g = StanleyGains::default();
    let cap = 1000.0;

    // centered at v_max on a straight: holds speed against drag, no brake, no steer
    let s = RaceCarState::on_centerline(&track, 100.0, 8.0);
    let out = racing_prior(&s, &track, cap, &g, &vp);
    assert_eq!(out.brake, 0.0);
    assert!(out.steer.abs() < 1e-9);
    assert!(out.throttle.abs() < 1e-9);

    // slightly below v_max the P controller adds a small throttle
    let s = RaceCarState::on_centerline(&track, 100.0, 7.8);
    let out = racing_prior(&s, &track, cap, &g, &vp);
    assert!(out.throttle > 0.0 && out.throttle < 0.1 && out.brake == 0.0);

    // 1 m left of the centerline: steer right (negative in the left-positive convention)
    let mut s = RaceCarState::on_centerline(&track, 100.0, 5.0);
    let h = track.heading_at(100.0);
    s.x -= h.sin();
    s.y += h.cos();
    let out = racing_prior(&s, &track, cap, &g, &vp);
    assert!(out.steer < 0.0);
    let (psi, e) = tracking_errors(&s, &track, &vp);
    assert!(psi.abs() < 1e-9 && close(e, -1.0, 1e-9));
    assert!(close(out.steer, stanley_law(0.0, -1.0, 5.0, &g), EXACT));

    // at rest on the centerline: full schedule throttle
    let s = RaceCarState::on_centerline(&track, 100.0, 0.0);
    let out = racing_prior(&s, &track, cap, &g, &vp);
    assert!(close(out.throttle, 1.0, EXACT) && out.brake == 0.0 && out.steer.abs() < 1e-9);
    let a = out.normalized(vp.max_steer);
    assert_eq!(a, [1.0, -1.0, 0.0]);
}

#[test]
fn racing_prior_is_deterministic() {
    let track = cheq_env::generate_track(5, &Default::default()).unwrap();
    let vp = VehicleParams::default();
    let mut s = RaceCarState::on_centerline(&track, 40.0, 6.0);
    s.x += 0.4;
    s.yaw -= 0.05;
    let a = racing_prior(&s, &track, 35.0, &StanleyGains::default(), &vp);
    let b = racing_prior(&s, &track, 35.0, &StanleyGains::default(), &vp);
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn mix_is_convex(p in prop::collection::vec(-1.0..1.0f64, 3), r in prop::collection::vec(-1.0..1.0f64, 3), l in 0.0..=1.0f64) {
        let m = mix(&p, &r, l).unwrap();
        for i in 0..3 {
            let (lo, hi) = (p[i].min(r[i]), p[i].max(r[i]));
            prop_assert!(m[i] >= lo - 1e-15 && m[i] <= hi + 1e-15);
        }
    }

    #[test]
    fn uncertainty_equivariance(q in prop::collection::vec(-100.0..100.0f64, 2..8), c in -1e3..1e3f64, k in -10.0..10.0f64) {
        let u = ensemble_uncertainty(&q).unwrap();
        let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
        let scaled: Vec<f64> = q.iter().map(|v| v * k).collect();
        prop_assert!((ensemble_uncertainty(&shifted).unwrap() - u).abs() <= 1e-9 * (1.0 + c.abs()));
        prop_assert!((ensemble_uncertainty(&scaled).unwrap() - k.abs() * u).abs() <= 1e-9 * (1.0 + u * k.abs()));
    }

    #[test]
    fn cheq_weight_is_monotone_and_bounded(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let cfg = WeightConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (wl, wh) = (adapt_weight_cheq(lo, &cfg), adapt_weight_cheq(hi, &cfg));
        prop_assert!(wl >= wh);
        prop_assert!((0.2..=1.0).contains(&wl) && (0.2..=1.0).contains(&wh));
        // Lipschitz continuity with slope (0.8 / 0.12)
        prop_assert!((wl - wh).abs() <= (0.8 / 0.12) * (hi - lo) + 1e-12);
    }

    #[test]
    fn every_adaptor_stays_in_range(u in 0.0..10.0f64, d in -1e4..1e4f64, t in 0u64..10_000, l in 0.0..=1.0f64) {
        let signal = AdaptSignal { step: t, uncertainty: u, td_error: d };
        for adaptor in [
            WeightAdaptor::Fixed { lambda: l },
            WeightAdaptor::Schedule { horizon: 5000 },
            WeightAdaptor::Cheq(WeightConfig::default()),
            WeightAdaptor::Core { a: 7.0, c: 0.02 },
        ] {
            let (lo, hi) = adaptor.bounds();
            let w = adaptor.next(&signal);
            prop_assert!(w >= lo && w <= hi);
        }
    }

    #[test]
    fn longitudinal_controllers_are_exclusive(v in 0.0..40.0f64, vt in 0.0..40.0f64, k in 0.0..1.0f64) {
        let (t, b) = longitudinal_control(v, vt, k);
        prop_assert_eq!(t * b, 0.0);
        prop_assert!((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&b));
    }

    #[test]
    fn stanley_monotone_in_crosstrack(psi in -0.5..0.5f64, e1 in -5.0..5.0f64, de in 1e-3..5.0f64, v in 0.0..30.0f64, dv in 0.0..10.0f64) {
        let g = StanleyGains::default();
        prop_assert!(stanley_law(psi, e1 + de, v, &g) > stanley_law(psi, e1, v, &g));
        let slow = (stanley_law(psi, e1, v, &g) - psi).abs();
        let fast = (stanley_law(psi, e1, v + dv, &g) - psi).abs();
        prop_assert!(fast <= slow + 1e-15);
    }
}
