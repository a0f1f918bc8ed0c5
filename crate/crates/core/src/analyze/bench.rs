use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, ReferenceTrajectory, RewardConfig, VecEnv};
use crate::skeleton::{forward_kinematics, ModelSpec};
use crate::{Error, Result, DT_CTRL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpsRow {
    pub envs: usize,
    pub steps: u64,
    pub seconds: f64,
    pub sps: f64,
}

/// Constant-pose reference at zero coordinates. Floating roots are raised so
/// that the lowest contact sphere touches the ground.
pub fn standing_reference(spec: &ModelSpec, frames: usize) -> Result<ReferenceTrajectory> {
    let mut q = vec![0.0; spec.n_q()];
    if spec.is_floating() {
        let kin = forward_kinematics(spec, &q)?;
        let low = spec
            .contacts
            .iter()
            .map(|c| kin.point(c.link, c.offset)[1] - c.radius)
            .fold(f64::INFINITY, f64::min);
        if low.is_finite() {
            q[1] = -low;
        }
    }
    let dq = vec![0.0; spec.n_q()];
    ReferenceTrajectory::from_motion(spec, vec![q; frames.max(2)], vec![dq; frames.max(2)], false)
}

/// Aggregate environment steps per second under uniform random excitations,
/// one measurement window of `duration` per environment count.
pub fn sps_benchmark(spec: &ModelSpec, env_counts: &[usize], duration: Duration, seed: u64) -> Result<Vec<SpsRow>> {
    if env_counts.is_empty() || env_counts.contains(&0) {
        return Err(Error::Config("env_counts must be non-empty and positive".into()));
    }
    let spec = Arc::new(spec.clone());
    let reference = Arc::new(standing_reference(&spec, (10.0 / DT_CTRL) as usize)?);
    let cfg = EnvConfig { rsi: false, termination_body_err: f64::INFINITY, ..EnvConfig::default() };
    let na = spec.n_muscles();
    let mut out = Vec::with_capacity(env_counts.len());
    for &n in env_counts {
        let mut envs = VecEnv::new(spec.clone(), reference.clone(), cfg.clone(), RewardConfig::default(), n, seed)?;
        envs.reset_all()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actions = vec![0.0; n * na];
        let start = Instant::now();
        let mut steps = 0u64;
        while start.elapsed() < duration {
            actions.iter_mut().for_each(|a| *a = rng.gen());
            envs.step(&actions, &|_: &[f64]| 0.0)?;
            steps += n as u64;
        }
        let seconds = start.elapsed().as_secs_f64();
        out.push(SpsRow { envs: n, steps, seconds, sps: steps as f64 / seconds });
    }
    Ok(out)
}
