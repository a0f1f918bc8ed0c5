use std::f64::consts::PI;
use std::sync::Arc;

use myotrack::env::{
    emg_reward, observation_dim, observe, power_reward, tracking_error, wrap_angle, Env, EnvConfig, Mode,
    OracleController, OracleGains, PhaseSampler, ReferenceTrajectory, RewardConfig, RewardMode, TrackingError,
    VecEnv,
};
use myotrack::skeleton::{ModelSpec, SimState};
use myotrack::{asset_path, Error, DT_CTRL};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(name: &str) -> ModelSpec {
    ModelSpec::load(asset_path(&format!("models/{name}.toml"))).unwrap()
}

fn zero_tracking(_: &[f64]) -> f64 {
    0.0
}

/// Two-joint sinusoid around the arm's mid pose.
fn arm_reference(spec: &ModelSpec, seconds: f64) -> ReferenceTrajectory {
    let frames = (seconds / DT_CTRL).round() as usize + 1;
    let w = 2.0 * PI / 2.0;
    let (mut q, mut dq) = (Vec::new(), Vec::new());
    for f in 0..frames {
        let t = f as f64 * DT_CTRL;
        q.push(vec![0.6 + 0.4 * (w * t).sin(), 1.2 + 0.5 * (w * t + 1.0).sin()]);
        dq.push(vec![0.4 * w * (w * t).cos(), 0.5 * w * (w * t + 1.0).cos()]);
    }
    ReferenceTrajectory::from_motion(spec, q, dq, true).unwrap()
}

/// Walker translating forward at a constant speed in its standing pose.
fn walker_reference(spec: &ModelSpec, frames: usize) -> ReferenceTrajectory {
    let (mut q, mut dq) = (Vec::new(), Vec::new());
    for f in 0..frames {
        let x = 1.2 * f as f64 * DT_CTRL;
        q.push(vec![x, 0.94, 0.0, 0.0, 0.0, 0.0, 0.0]);
        dq.push(vec![1.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
    ReferenceTrajectory::from_motion(spec, q, dq, false).unwrap()
}

fn env(spec: ModelSpec, reference: ReferenceTrajectory, cfg: EnvConfig, reward: RewardConfig, mode: Mode) -> Env {
    Env::new(Arc::new(spec), Arc::new(reference), cfg, reward, mode).unwrap()
}

#[test]
fn observation_length_matches_component_count() {
    let spec = model("arm");
    let reference = arm_reference(&spec, 1.0);
    let state = SimState::new(&spec, reference.q[3].clone(), reference.dq[3].clone(), 0.01).unwrap();
    let obs = observe(&spec, &state, &reference, 3).unwrap();
    // 2 coordinates, 2 key bodies, 6 muscles.
    let proprio = 2 * 2 + 2 * 3 + 6 * 4;
    let target = 2 + 2 * 2 + 2;
    assert_eq!(obs.len(), proprio + target);
    assert_eq!(observation_dim(&spec), obs.len());
    assert!(obs.iter().all(|v| v.is_finite()));
    assert!(matches!(observe(&spec, &state, &reference, reference.len()), Err(Error::Contract(_))));
}

#[test]
fn state_on_reference_frame_mirrors_target_block() {
    let arm = model("arm");
    let walker = model("walker");
    for (spec, reference) in [(&arm, arm_reference(&arm, 1.0)), (&walker, walker_reference(&walker, 10))] {
        let (nq, nk, nm) = (spec.n_q(), spec.n_key(), spec.n_muscles());
        let f = 4;
        let state = SimState::new(spec, reference.q[f].clone(), reference.dq[f].clone(), 0.01).unwrap();
        let obs = observe(spec, &state, &reference, f).unwrap();
        let target = 2 * nq + 3 * nk + 4 * nm;
        assert_eq!(&obs[..nq], &obs[target..target + nq]);
        assert_eq!(&obs[2 * nq..2 * nq + 3 * nk], &obs[target + nq..target + nq + 3 * nk]);
    }
}

#[test]
fn tracking_error_is_zero_on_reference_frames() {
    let arm = model("arm");
    let walker = model("walker");
    for (spec, reference) in [(&arm, arm_reference(&arm, 2.0)), (&walker, walker_reference(&walker, 30))] {
        for f in 0..reference.len() {
            let state = SimState::new(spec, reference.q[f].clone(), reference.dq[f].clone(), 0.01).unwrap();
            let d = tracking_error(spec, &state, &reference, f).unwrap().to_vec();
            assert_eq!(d.len(), TrackingError::dim(spec));
            assert!(d.iter().all(|v| v.abs() < 1e-12), "frame {f}: {d:?}");
        }
    }
}

#[test]
fn root_translation_is_isolated() {
    let spec = model("walker");
    let reference = walker_reference(&spec, 5);
    let mut q = reference.q[2].clone();
    q[0] += 0.1;
    let state = SimState::new(&spec, q, reference.dq[2].clone(), 0.01).unwrap();
    let e = tracking_error(&spec, &state, &reference, 2).unwrap();
    assert!((e.root_translation[0] - 0.1).abs() < 1e-12);
    assert!(e.root_translation[1].abs() < 1e-12);
    let rest: Vec<f64> = e.to_vec()[1..].to_vec();
    assert!(rest.iter().all(|v| v.abs() < 1e-12), "{rest:?}");
}

#[test]
fn root_rotation_wraps() {
    assert!((wrap_angle(3.1 - (-3.1)) - (6.2 - 2.0 * PI)).abs() < 1e-12);
    assert!((wrap_angle(3.1 - (-3.1)) + 0.0832).abs() < 1e-4);
    assert_eq!(wrap_angle(PI), PI);
    assert!((wrap_angle(-PI) - PI).abs() < 1e-15);

    let spec = model("walker");
    let mut reference = walker_reference(&spec, 3);
    reference.q[1][2] = -3.1;
    let refreshed = ReferenceTrajectory::from_motion(&spec, reference.q.clone(), reference.dq.clone(), false).unwrap();
    let mut q = refreshed.q[1].clone();
    q[2] = 3.1;
    let state = SimState::new(&spec, q, refreshed.dq[1].clone(), 0.01).unwrap();
    let e = tracking_error(&spec, &state, &refreshed, 1).unwrap();
    assert!((e.root_rotation - (6.2 - 2.0 * PI)).abs() < 1e-12);
}

#[test]
fn rsi_off_and_evaluation_start_at_phase_zero() {
    let spec = model("arm");
    let reference = arm_reference(&spec, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = EnvConfig { rsi: false, ..EnvConfig::default() };
    let mut e = env(spec.clone(), reference.clone(), cfg, RewardConfig::default(), Mode::Train);
    let mut ev = env(spec, reference, EnvConfig::default(), RewardConfig::default(), Mode::Eval);
    let sampler = PhaseSampler::with_rates(vec![0.0, 1.0, 0.0], 0.0).unwrap();
    for _ in 0..50 {
        e.reset(Some(&sampler), &mut rng).unwrap();
        ev.reset(Some(&sampler), &mut rng).unwrap();
        assert_eq!(e.t_index(), 0);
        assert_eq!(ev.t_index(), 0);
    }
}

#[test]
fn rsi_covers_phases_and_sets_reset_activation() {
    let spec = model("arm");
    let reference = arm_reference(&spec, 2.0);
    let mut e = env(spec, reference.clone(), EnvConfig::default(), RewardConfig::default(), Mode::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut seen = vec![false; reference.len()];
    for _ in 0..3000 {
        e.reset(None, &mut rng).unwrap();
        let f = e.t_index();
        assert!(f + 1 < reference.len());
        seen[f] = true;
        assert_eq!(e.state().q, reference.q[f]);
        assert!(e.state().muscles.iter().all(|m| m.act == 0.01));
    }
    assert!(seen[..reference.len() - 1].iter().all(|&s| s));
}

#[test]
fn uniform_failure_stats_sample_uniformly() {
    let sampler = PhaseSampler::with_rates(vec![0.3; 10], 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut counts = [0usize; 10];
    for _ in 0..n {
        counts[sampler.sample_bin(&mut rng)] += 1;
    }
    let expected = n as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-square with 9 degrees of freedom.
    assert!(chi2 < 27.877, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn concentrated_failure_selects_one_bin() {
    let spec = model("arm");
    let reference = arm_reference(&spec, 2.0);
    let cfg = EnvConfig { adaptive_bins: 4, adaptive_mix: 0.0, ..EnvConfig::default() };
    let mut e = env(spec, reference.clone(), cfg, RewardConfig::default(), Mode::Train);
    let sampler = PhaseSampler::with_rates(vec![0.0, 0.0, 1.0, 0.0], 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let starts = reference.len() - 1;
    for _ in 0..500 {
        e.reset(Some(&sampler), &mut rng).unwrap();
        assert_eq!(e.start_bin(), 2);
        assert!((2 * starts / 4..3 * starts / 4).contains(&e.t_index()));
    }
}

proptest! {
    #[test]
    fn sampler_respects_mixture_floor(rates in prop::collection::vec(0.0f64..1.0, 1..20), mix in 0.0f64..=1.0) {
        let s = PhaseSampler::with_rates(rates, mix).unwrap();
        let p = s.probabilities();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let floor = mix / p.len() as f64;
        prop_assert!(p.iter().all(|&x| x >= floor - 1e-15));
    }
}

#[test]
fn teleport_oracle_has_zero_error_every_step() {
    let spec = model("arm");
    let reference = arm_reference(&spec, 2.0);
    let mut e = env(spec, reference.clone(), EnvConfig::default(), RewardConfig::default(), Mode::Eval);
    e.reset(None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut steps = 0;
    loop {
        let tr = e.step_teleport(&|d: &[f64]| -d.iter().map(|v| v * v).sum::<f64>()).unwrap();
        assert!(tr.info.delta.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(tr.info.tracking_reward, 0.0);
        steps += 1;
        if tr.done {
            assert!(!tr.terminal);
            break;
        }
    }
    assert_eq!(steps, reference.len() - 1);
}

#[test]
fn infinite_threshold_ends_only_at_horizon() {
    let spec = model("arm");
    let reference = arm_reference(&spec, 4.0);
    let cfg = EnvConfig { episode_horizon: 37, rsi: false, termination_body_err: f64::INFINITY, ..EnvConfig::default() };
    let mut e = env(spec.clone(), reference, cfg, RewardConfig::default(), Mode::Train);
    e.reset(None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 1..=37 {
        let a: Vec<f64> = (0..spec.n_muscles()).map(|_| rng.gen()).collect();
        let tr = e.step(&a, &zero_tracking).unwrap();
        assert_eq!(tr.done, k == 37);
        assert!(!tr.terminal);
    }
    assert!(matches!(e.step(&[0.0; 6], &zero_tracking), Err(Error::Contract(_))));
}

#[test]
fn displaced_key_body_terminates_training_but_not_evaluation() {
    let spec = model("walker");
    let reference = walker_reference(&spec, 40);
    let cfg = EnvConfig { rsi: false, ..EnvConfig::default() };
    for mode in [Mode::Train, Mode::Eval] {
        let mut e = env(spec.clone(), reference.clone(), cfg.clone(), RewardConfig::default(), mode);
        e.reset(None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut s = e.state().clone();
        s.q[0] += 0.6;
        e.set_state(s).unwrap();
        let tr = e.step(&vec![0.0; spec.n_muscles()], &zero_tracking).unwrap();
        assert!(tr.info.max_body_err > 0.5);
        match mode {
            Mode::Train => assert!(tr.done && tr.terminal && tr.info.failed),
            Mode::Eval => {
                assert!(!tr.done);
                let mut n = 1;
                while !e.is_done() {
                    e.step(&vec![0.0; spec.n_muscles()], &zero_tracking).unwrap();
                    n += 1;
                }
                assert_eq!(n, reference.len() - 1);
            }
        }
    }
}

#[test]
fn actions_are_clipped_and_must_be_finite() {
    let spec = model("arm");
    let reference = arm_reference(&spec, 1.0);
    let cfg = EnvConfig { rsi: false, ..EnvConfig::default() };
    let mut a = env(spec.clone(), reference.clone(), cfg.clone(), RewardConfig::default(), Mode::Train);
    let mut b = a.clone();
    let ta = a.step(&[-3.0, 2.0, 0.5, 7.0, -0.1, 1.0], &zero_tracking).unwrap();
    let tb = b.step(&[0.0, 1.0, 0.5, 1.0, 0.0, 1.0], &zero_tracking).unwrap();
    assert_eq!(ta, tb);
    let mut c = env(spec, reference, cfg, RewardConfig::default(), Mode::Train);
    assert!(c.step(&[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0], &zero_tracking).is_err());
}

fn emg_reference(spec: &ModelSpec) -> ReferenceTrajectory {
    let mut reference = arm_reference(spec, 2.0);
    reference.emg = Some(
        (0..reference.len())
            .map(|f| (0..spec.n_muscles()).map(|m| 0.5 + 0.4 * ((f + 7 * m) as f64 * 0.1).sin()).collect())
            .collect(),
    );
    reference
}

#[test]
fn composite_emg_reward_recomputes_from_logged_rollout() {
    let spec = model("arm");
    let reference = emg_reference(&spec);
    let nm = spec.n_muscles();
    let reward = RewardConfig { mode: RewardMode::ImitationEmg, emg_channel_map: (0..nm).collect(), ..RewardConfig::default() };
    let cfg = EnvConfig { rsi: false, termination_body_err: f64::INFINITY, ..EnvConfig::default() };
    let mut e = env(spec.clone(), reference.clone(), cfg, reward, Mode::Train);
    let tracking = |d: &[f64]| (-d.iter().map(|v| v * v).sum::<f64>()).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let act_offset = 2 * spec.n_q() + 3 * spec.n_key();
    let mut log = Vec::new();
    while !e.is_done() {
        let a: Vec<f64> = (0..nm).map(|_| rng.gen()).collect();
        log.push(e.step(&a, &tracking).unwrap());
    }
    for tr in &log {
        let act_sim = &tr.obs[act_offset..act_offset + nm];
        let measured = &reference.emg.as_ref().unwrap()[tr.info.t_index];
        let want = tracking(&tr.info.delta) + 100.0 * emg_reward(act_sim, measured).unwrap();
        assert!((tr.reward - want).abs() < 1e-12, "{} vs {want}", tr.reward);
    }
}

#[test]
fn composite_power_reward_recomputes_from_logged_rollout() {
    let spec = model("arm");
    let reference = arm_reference(&spec, 1.0);
    let nm = spec.n_muscles();
    let reward = RewardConfig { mode: RewardMode::ImitationPower, w_power: 0.05, ..RewardConfig::default() };
    let cfg = EnvConfig { rsi: false, termination_body_err: f64::INFINITY, ..EnvConfig::default() };
    let mut e = env(spec.clone(), reference, cfg, reward, Mode::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let f_offset = 2 * spec.n_q() + 3 * spec.n_key() + nm;
    while !e.is_done() {
        let a: Vec<f64> = (0..nm).map(|_| rng.gen()).collect();
        let tr = e.step(&a, &zero_tracking).unwrap();
        let force = &tr.obs[f_offset..f_offset + nm];
        let speed: Vec<f64> = tr.obs[f_offset + 2 * nm..f_offset + 3 * nm]
            .iter()
            .zip(&spec.muscles)
            .map(|(v, p)| v * p.l_opt * p.v_max)
            .collect();
        let want = 0.05 * power_reward(force, &speed).unwrap();
        assert!((tr.reward - want).abs() < 1e-9 * want.abs().max(1.0));
        assert!(tr.reward <= 0.0);
        let mean: f64 = tr.info.muscle_power.iter().sum::<f64>() / nm as f64;
        assert!((tr.info.power_reward + mean).abs() < 1e-9 * mean.max(1.0));
    }
}

#[test]
fn emg_mode_rejects_mismatched_channel_map() {
    let spec = model("arm");
    let reference = emg_reference(&spec);
    let bad = RewardConfig { mode: RewardMode::ImitationEmg, emg_channel_map: vec![0, 1], ..RewardConfig::default() };
    let r = Env::new(Arc::new(spec.clone()), Arc::new(reference.clone()), EnvConfig::default(), bad, Mode::Train);
    assert!(matches!(r, Err(Error::Config(_))));
    let out_of_range = RewardConfig { emg_channel_map: vec![0, 1, 2, 3, 4, 9], ..RewardConfig::default() };
    let r = Env::new(Arc::new(spec), Arc::new(reference), EnvConfig::default(), out_of_range, Mode::Train);
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn vec_env_is_deterministic_and_respects_horizon() {
    let spec = Arc::new(model("arm"));
    let reference = Arc::new(arm_reference(&spec, 4.0));
    let cfg = EnvConfig { episode_horizon: 25, termination_body_err: 0.05, ..EnvConfig::default() };
    let run = || {
        let mut v = VecEnv::new(spec.clone(), reference.clone(), cfg.clone(), RewardConfig::default(), 6, 11).unwrap();
        let mut obs = v.reset_all().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut lengths = vec![0usize; 6];
        let mut trace = Vec::new();
        for _ in 0..80 {
            let a: Vec<f64> = (0..6 * 6).map(|_| rng.gen()).collect();
            let out = v.step(&a, &zero_tracking).unwrap();
            for i in 0..6 {
                lengths[i] += 1;
                assert!(lengths[i] <= 25);
                let row = i * v.obs_dim()..(i + 1) * v.obs_dim();
                if out.done[i] {
                    lengths[i] = 0;
                } else {
                    assert_eq!(out.next_obs[row.clone()], out.obs[row]);
                }
            }
            assert_eq!(obs.len(), out.obs.len());
            obs = out.obs.clone();
            trace.push(out);
        }
        (trace, v.sampler().unwrap().rates().to_vec())
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert!(ra.iter().any(|&r| r > 0.0));
}

#[test]
fn oracle_controller_tracks_arm_sinusoid() {
    let spec = model("arm");
    let reference = arm_reference(&spec, 4.0);
    let oracle = OracleController::new(&spec, OracleGains::default()).unwrap();
    let mut e = env(spec.clone(), reference.clone(), EnvConfig::default(), RewardConfig::default(), Mode::Eval);
    e.reset(None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut sum = 0.0;
    let mut n = 0;
    while !e.is_done() {
        let u = oracle.excitation(&spec, e.state(), &reference, e.t_index()).unwrap();
        let tr = e.step(&u, &zero_tracking).unwrap();
        sum += tr.info.delta[3..5].iter().map(|v| v.abs()).sum::<f64>();
        n += 2;
    }
    let mean_deg = (sum / n as f64).to_degrees();
    assert!(mean_deg < 2.0, "oracle mean joint error {mean_deg} deg");
    assert!(OracleController::new(&model("walker"), OracleGains::default()).is_err());
}
