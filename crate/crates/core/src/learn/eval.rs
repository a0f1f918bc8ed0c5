use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Policy, RunningNorm, SampleMode};
use crate::analyze::{summarize, RolloutLog, TrackingSummary};
use crate::env::{Env, EnvConfig, Mode, OracleController, ReferenceTrajectory, RewardConfig, TrackingError};
use crate::skeleton::{forward_kinematics, ModelSpec};
use crate::{Result, DT_CTRL};

/// Source of excitations for an evaluation rollout.
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Deterministic policy on normalized observations.
    Policy { policy: &'a Policy, norm: &'a RunningNorm },
    Oracle(&'a OracleController),
    /// Places the body exactly on every reference frame.
    Teleport,
}

impl Controller<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Policy { .. } => "policy",
            Controller::Oracle(_) => "oracle",
            Controller::Teleport => "teleport",
        }
    }
}

/// Runs one episode from the first reference frame to the last without early
/// termination and records every control step.
pub fn evaluate(
    spec: Arc<ModelSpec>,
    reference: Arc<ReferenceTrajectory>,
    env_cfg: &EnvConfig,
    reward: &RewardConfig,
    controller: Controller,
    tracking: &(dyn Fn(&[f64]) -> f64 + Sync),
    seed: u64,
) -> Result<(RolloutLog, TrackingSummary)> {
    let cfg = EnvConfig { episode_horizon: reference.len(), ..env_cfg.clone() };
    let mut env = Env::new(spec.clone(), reference.clone(), cfg, reward.clone(), Mode::Eval)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = env.reset(None, &mut rng)?;
    let mode = format!("{:?}", reward.mode);
    let mut log = RolloutLog::new(&spec, controller.name(), seed, &mode, DT_CTRL, TrackingError::dim(&spec));
    let feet = spec.contact_links();

    while !env.is_done() {
        let t = env.t_index();
        let (tr, excitation) = match controller {
            Controller::Policy { policy, norm } => {
                let (a, _, _) = policy.sample_action(&norm.apply(&obs), &mut rng, SampleMode::Deterministic)?;
                let u: Vec<f64> = a.iter().map(|v| v.clamp(0.0, 1.0)).collect();
                (env.step(&a, tracking)?, u)
            }
            Controller::Oracle(oracle) => {
                let u = oracle.excitation(&spec, env.state(), &reference, t)?;
                (env.step(&u, tracking)?, u)
            }
            Controller::Teleport => {
                let tr = env.step_teleport(tracking)?;
                let u = env.state().muscles.iter().map(|m| m.act).collect();
                (tr, u)
            }
        };
        let state = env.state();
        let ti = tr.info.t_index;
        let kin = forward_kinematics(&spec, &state.q)?;
        log.q.push(state.q.clone());
        log.dq.push(state.dq.clone());
        log.q_ref.push(reference.q[ti].clone());
        log.key_pos.push(kin.key_positions(&spec));
        log.key_ref.push(reference.key_pos[ti].clone());
        log.act.push(state.muscles.iter().map(|m| m.act).collect());
        log.excitation.push(excitation);
        log.force.push(state.muscles.iter().map(|m| m.f_m).collect());
        log.fiber_speed.push(state.muscles.iter().zip(&spec.muscles).map(|(m, p)| p.fiber_speed_mps(m.v_m)).collect());
        let mut grf = vec![[0.0; 2]; feet.len()];
        for (c, f) in spec.contacts.iter().zip(&tr.info.sphere_forces) {
            if let Some(k) = feet.iter().position(|&l| l == c.link) {
                grf[k][0] += f[0];
                grf[k][1] += f[1];
            }
        }
        log.grf.push(grf);
        log.reward.push(tr.reward);
        log.tracking_reward.push(tr.info.tracking_reward);
        log.aux_reward.push(tr.info.aux_reward);
        log.delta.push(tr.info.delta);
        obs = tr.obs;
    }
    let summary = summarize(&log)?;
    Ok((log, summary))
}
