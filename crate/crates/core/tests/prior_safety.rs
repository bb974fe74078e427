use cheq_core::{racing_prior, RacingTask, ResetMode, StanleyGains, Task};
use cheq_env::{generate_track, RacingAction, RacingConfig, TrackGenParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct LapReport {
    laps: f64,
    failures: usize,
    collisions: usize,
    overlap_steps: usize,
    max_offset: f64,
}

fn drive_prior(track_seed: u64, laps: f64) -> LapReport {
    let track = generate_track(track_seed, &TrackGenParams::default()).unwrap();
    let mut cfg = RacingConfig::default();
    cfg.sim.random_start = false;
    cfg.sim.max_episode_steps = usize::MAX;
    let gains = StanleyGains::default();
    let mut task = RacingTask::new(track, cfg, gains.clone()).unwrap();
    task.reset(&mut ChaCha8Rng::seed_from_u64(0), ResetMode::Eval);
    let mut report = LapReport {
        laps: 0.0,
        failures: 0,
        collisions: 0,
        overlap_steps: 0,
        max_offset: 0.0,
    };
    while task.env().laps() < laps {
        let env = task.env();
        let radius = env.curve_radius();
        let out = racing_prior(env.state(), env.track(), radius, &gains, &env.config().vehicle);
        if out.throttle * out.brake != 0.0 {
            report.overlap_steps += 1;
        }
        let action = task.prior_action();
        let decoded = RacingAction::from_normalized(&action).unwrap();
        assert!((decoded.throttle - out.throttle).abs() < 1e-12 && (decoded.brake - out.brake).abs() < 1e-12);
        if decoded.throttle * decoded.brake != 0.0 {
            report.overlap_steps += 1;
        }
        let t = task.env_mut().step(&action).unwrap();
        report.failures += usize::from(t.failure);
        report.collisions += usize::from(t.collision);
        report.max_offset = report.max_offset.max(t.step.lateral_offset.abs());
        if t.failure {
            break;
        }
    }
    report.laps = task.env().laps();
    report
}

#[test]
fn prior_completes_twenty_laps_without_failure() {
    let r = drive_prior(0, 20.0);
    assert!(r.laps >= 20.0);
    assert_eq!(r.failures, 0);
    assert_eq!(r.overlap_steps, 0);
    assert_eq!(r.collisions, 0);
    assert!(r.max_offset < 1.0, "max offset {}", r.max_offset);
}

#[test]
fn prior_is_safe_on_unseen_tracks() {
    for seed in 1000..1010 {
        let r = drive_prior(seed, 1.0);
        assert_eq!(r.failures, 0, "track {seed}");
        assert_eq!(r.overlap_steps, 0, "track {seed}");
    }
}
