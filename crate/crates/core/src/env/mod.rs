//! Imitation environment: observations, tracking error, episode resets with
//! adaptive phase sampling, termination and reward composition.
//!
//! Observation layout, in order:
//! `q, dq, key (x, z) pairs, key angles, act, F_m (N), l_m, v_m`, then the
//! reference frame at the current index: `q_ref, key (x, z)_ref, key angles_ref`.

mod oracle;
mod reference;
mod reward;
mod sampler;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use oracle::{OracleController, OracleGains};
pub use reference::ReferenceTrajectory;
pub use reward::{emg_reward, power_reward, RewardConfig, RewardMode};
pub use sampler::{bin_frames, PhaseSampler, FAILURE_DECAY};

use crate::error::ensure_dim;
use crate::skeleton::{self, forward_kinematics, ModelSpec, SimState};
use crate::{Error, Result};

/// Activation every muscle starts an episode with.
pub const RESET_ACTIVATION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub episode_horizon: usize,
    pub rsi: bool,
    pub adaptive_bins: usize,
    pub adaptive_mix: f64,
    /// World-frame key-body distance that ends a training episode, m.
    pub termination_body_err: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { episode_horizon: 500, rsi: true, adaptive_bins: 10, adaptive_mix: 0.2, termination_body_err: 0.5 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episode_horizon < 1 {
            return Err(Error::Config("episode_horizon must be at least 1".into()));
        }
        if self.adaptive_bins < 1 {
            return Err(Error::Config("adaptive_bins must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.adaptive_mix) {
            return Err(Error::Config(format!("adaptive_mix {} outside [0, 1]", self.adaptive_mix)));
        }
        if !(self.termination_body_err > 0.0) {
            return Err(Error::Config("termination_body_err must be positive".into()));
        }
        Ok(())
    }
}

/// Signed angle difference wrapped to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Simulated-minus-reference pose discrepancy.
///
/// Key-body positions are taken relative to the root origin so that a pure
/// root translation shows up only in `root_translation`. Fixed-base models
/// report zero root terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingError {
    pub root_translation: [f64; 2],
    pub root_rotation: f64,
    pub joint_angles: Vec<f64>,
    pub body_positions: Vec<[f64; 2]>,
}

impl TrackingError {
    pub fn dim(spec: &ModelSpec) -> usize {
        3 + spec.joints.len() + 2 * spec.n_key()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 + self.joint_angles.len() + 2 * self.body_positions.len());
        v.extend_from_slice(&self.root_translation);
        v.push(self.root_rotation);
        v.extend_from_slice(&self.joint_angles);
        v.extend(self.body_positions.iter().flatten());
        v
    }
}

fn check_index(reference: &ReferenceTrajectory, t_index: usize) -> Result<()> {
    if t_index >= reference.len() {
        return Err(Error::Contract(format!("frame {t_index} outside reference of {} frames", reference.len())));
    }
    Ok(())
}

pub fn tracking_error(
    spec: &ModelSpec,
    state: &SimState,
    reference: &ReferenceTrajectory,
    t_index: usize,
) -> Result<TrackingError> {
    check_index(reference, t_index)?;
    ensure_dim!(state.q.len(), spec.n_q(), "generalized coordinates");
    let q_ref = &reference.q[t_index];
    let r = spec.root_dofs();
    let (root_translation, root_rotation, origin_sim, origin_ref) = if spec.is_floating() {
        let o_sim = [state.q[0], state.q[1]];
        let o_ref = [q_ref[0], q_ref[1]];
        ([o_sim[0] - o_ref[0], o_sim[1] - o_ref[1]], wrap_angle(state.q[2] - q_ref[2]), o_sim, o_ref)
    } else {
        ([0.0; 2], 0.0, [0.0; 2], [0.0; 2])
    };
    let joint_angles = (0..spec.joints.len()).map(|k| state.q[r + k] - q_ref[r + k]).collect();
    let kin = forward_kinematics(spec, &state.q)?;
    let body_positions = kin
        .key_positions(spec)
        .iter()
        .zip(&reference.key_pos[t_index])
        .map(|(p, p_ref)| {
            [(p[0] - origin_sim[0]) - (p_ref[0] - origin_ref[0]), (p[1] - origin_sim[1]) - (p_ref[1] - origin_ref[1])]
        })
        .collect();
    Ok(TrackingError { root_translation, root_rotation, joint_angles, body_positions })
}

pub fn observation_dim(spec: &ModelSpec) -> usize {
    let (nq, nk, nm) = (spec.n_q(), spec.n_key(), spec.n_muscles());
    2 * nq + 3 * nk + 4 * nm + nq + 3 * nk
}

pub fn observe(spec: &ModelSpec, state: &SimState, reference: &ReferenceTrajectory, t_index: usize) -> Result<Vec<f64>> {
    check_index(reference, t_index)?;
    ensure_dim!(state.q.len(), spec.n_q(), "generalized coordinates");
    ensure_dim!(state.muscles.len(), spec.n_muscles(), "muscle states");
    let kin = forward_kinematics(spec, &state.q)?;
    let mut obs = Vec::with_capacity(observation_dim(spec));
    obs.extend_from_slice(&state.q);
    obs.extend_from_slice(&state.dq);
    obs.extend(kin.key_positions(spec).iter().flatten());
    obs.extend(kin.key_angles(spec));
    obs.extend(state.muscles.iter().map(|m| m.act));
    obs.extend(state.muscles.iter().map(|m| m.f_m));
    obs.extend(state.muscles.iter().map(|m| m.l_m));
    obs.extend(state.muscles.iter().map(|m| m.v_m));
    obs.extend_from_slice(&reference.q[t_index]);
    obs.extend(reference.key_pos[t_index].iter().flatten());
    obs.extend_from_slice(&reference.key_angle[t_index]);
    if let Some(bad) = obs.iter().position(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("observation entry {bad} is not finite")));
    }
    Ok(obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Random start phases and early termination.
    Train,
    /// Start at frame 0 and run to the end of the reference.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    /// Reference frame the new state is compared against.
    pub t_index: usize,
    pub delta: Vec<f64>,
    pub tracking_reward: f64,
    /// Weighted regularization term (EMG or power), already included in the step reward.
    pub aux_reward: f64,
    pub emg_reward: Option<f64>,
    pub power_reward: f64,
    /// `|F v|` per muscle, W.
    pub muscle_power: Vec<f64>,
    pub sphere_forces: Vec<[f64; 2]>,
    /// Largest world-frame key-body distance from the reference, m.
    pub max_body_err: f64,
    pub diverged: bool,
    /// Ended by early termination or divergence rather than by running out of time.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode over for any reason.
    pub done: bool,
    /// Episode over because of failure; the value of the final state is not bootstrapped.
    pub terminal: bool,
    pub info: StepInfo,
}

/// One simulated episode tracking a shared reference.
#[derive(Debug, Clone)]
pub struct Env {
    spec: Arc<ModelSpec>,
    reference: Arc<ReferenceTrajectory>,
    cfg: EnvConfig,
    reward: RewardConfig,
    mode: Mode,
    state: SimState,
    t_index: usize,
    steps: usize,
    start_bin: usize,
    done: bool,
}

impl Env {
    pub fn new(
        spec: Arc<ModelSpec>,
        reference: Arc<ReferenceTrajectory>,
        cfg: EnvConfig,
        reward: RewardConfig,
        mode: Mode,
    ) -> Result<Self> {
        cfg.validate()?;
        reference.validate(&spec)?;
        reward.validate(spec.n_muscles(), reference.n_emg())?;
        let state = Self::frame_state(&spec, &reference, 0, RESET_ACTIVATION)?;
        Ok(Env { spec, reference, cfg, reward, mode, state, t_index: 0, steps: 0, start_bin: 0, done: false })
    }

    fn frame_state(spec: &ModelSpec, reference: &ReferenceTrajectory, frame: usize, act: f64) -> Result<SimState> {
        let mut s = SimState::new(spec, reference.q[frame].clone(), reference.dq[frame].clone(), act)?;
        s.t = frame as f64 * reference.dt;
        Ok(s)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn reference(&self) -> &ReferenceTrajectory {
        &self.reference
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn t_index(&self) -> usize {
        self.t_index
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn start_bin(&self) -> usize {
        self.start_bin
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observation(&self) -> Result<Vec<f64>> {
        observe(&self.spec, &self.state, &self.reference, self.t_index)
    }

    pub fn tracking_error(&self) -> Result<TrackingError> {
        tracking_error(&self.spec, &self.state, &self.reference, self.t_index)
    }

    /// Starts a new episode. Training with RSI draws a phase bin from
    /// `sampler` (uniform when absent) and a frame uniformly inside it.
    pub fn reset(&mut self, sampler: Option<&PhaseSampler>, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let n_start = self.reference.len() - 1;
        let (bin, frame) = if self.mode == Mode::Train && self.cfg.rsi {
            let bins = self.cfg.adaptive_bins;
            let bin = match sampler {
                Some(s) => s.sample_bin(rng),
                None => rng.gen_range(0..bins),
            };
            let range = bin_frames(bin, bins, n_start);
            let frame = if range.is_empty() { range.start.min(n_start - 1) } else { rng.gen_range(range) };
            (bin, frame)
        } else {
            (0, 0)
        };
        self.restart_at(frame)?;
        self.start_bin = bin;
        self.observation()
    }

    /// Places the episode at reference `frame` with reset activations.
    pub fn restart_at(&mut self, frame: usize) -> Result<()> {
        if frame + 1 >= self.reference.len() {
            return Err(Error::Contract(format!("cannot start at frame {frame}: no frame follows it")));
        }
        self.state = Self::frame_state(&self.spec, &self.reference, frame, RESET_ACTIVATION)?;
        self.t_index = frame;
        self.steps = 0;
        self.start_bin = 0;
        self.done = false;
        Ok(())
    }

    /// Replaces the simulator state, keeping the episode counters.
    pub fn set_state(&mut self, state: SimState) -> Result<()> {
        ensure_dim!(state.q.len(), self.spec.n_q(), "generalized coordinates");
        ensure_dim!(state.muscles.len(), self.spec.n_muscles(), "muscle states");
        self.state = state;
        Ok(())
    }

    /// Restores a full episode position, as saved by a training checkpoint.
    pub fn restore(&mut self, state: SimState, t_index: usize, steps: usize, start_bin: usize, done: bool) -> Result<()> {
        check_index(&self.reference, t_index)?;
        self.set_state(state)?;
        self.t_index = t_index;
        self.steps = steps;
        self.start_bin = start_bin;
        self.done = done;
        Ok(())
    }

    /// Applies excitations (clipped to `[0, 1]`) for one control step.
    ///
    /// `tracking` maps the tracking-error vector to the imitation reward; the
    /// configured regularization term is added to it.
    pub fn step(&mut self, action: &[f64], tracking: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<Transition> {
        ensure_dim!(action.len(), self.spec.n_muscles(), "action");
        if let Some(bad) = action.iter().find(|a| !a.is_finite()) {
            return Err(Error::Contract(format!("non-finite action entry {bad}")));
        }
        self.check_running()?;
        let u: Vec<f64> = action.iter().map(|a| a.clamp(0.0, 1.0)).collect();
        match skeleton::step(&self.state, &u, &self.spec, &self.spec.contact) {
            Ok((next, report)) => self.advance(next, report.sphere_forces, false, tracking),
            Err(Error::Diverged { substep }) => {
                log::debug!("simulation diverged at substep {substep} of frame {}", self.t_index);
                let state = self.state.clone();
                let forces = vec![[0.0; 2]; self.spec.contacts.len()];
                self.advance(state, forces, true, tracking)
            }
            Err(e) => Err(e),
        }
    }

    /// Moves exactly onto the next reference frame, bypassing the dynamics.
    pub fn step_teleport(&mut self, tracking: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<Transition> {
        self.check_running()?;
        let act = self.state.muscles.first().map_or(RESET_ACTIVATION, |m| m.act);
        let next = Self::frame_state(&self.spec, &self.reference, self.t_index + 1, act)?;
        let forces = vec![[0.0; 2]; self.spec.contacts.len()];
        self.advance(next, forces, false, tracking)
    }

    fn check_running(&self) -> Result<()> {
        if self.done {
            return Err(Error::Contract("step called on a finished episode; reset first".into()));
        }
        Ok(())
    }

    fn advance(
        &mut self,
        next: SimState,
        sphere_forces: Vec<[f64; 2]>,
        diverged: bool,
        tracking: &(dyn Fn(&[f64]) -> f64 + Sync),
    ) -> Result<Transition> {
        self.state = next;
        self.t_index += 1;
        self.steps += 1;
        let delta = self.tracking_error()?.to_vec();
        let kin = forward_kinematics(&self.spec, &self.state.q)?;
        let max_body_err = kin
            .key_positions(&self.spec)
            .iter()
            .zip(&self.reference.key_pos[self.t_index])
            .map(|(p, r)| (p[0] - r[0]).hypot(p[1] - r[1]))
            .fold(0.0, f64::max);

        let muscle_power: Vec<f64> = self
            .state
            .muscles
            .iter()
            .zip(&self.spec.muscles)
            .map(|(m, p)| (m.f_m * p.fiber_speed_mps(m.v_m)).abs())
            .collect();
        let forces: Vec<f64> = self.state.muscles.iter().map(|m| m.f_m).collect();
        let speeds: Vec<f64> =
            self.state.muscles.iter().zip(&self.spec.muscles).map(|(m, p)| p.fiber_speed_mps(m.v_m)).collect();
        let r_power = power_reward(&forces, &speeds)?;
        let r_emg = match &self.reference.emg {
            Some(emg) if !self.reward.emg_channel_map.is_empty() => {
                let sim: Vec<f64> = self.reward.emg_channel_map.iter().map(|&m| self.state.muscles[m].act).collect();
                Some(emg_reward(&sim, &emg[self.t_index])?)
            }
            _ => None,
        };
        let aux_reward = match self.reward.mode {
            RewardMode::ImitationOnly => 0.0,
            RewardMode::ImitationEmg => self.reward.w_emg * r_emg.unwrap_or(0.0),
            RewardMode::ImitationPower => self.reward.w_power * r_power,
        };
        let tracking_reward = if diverged { 0.0 } else { tracking(&delta) };

        let out_of_time = self.t_index + 1 >= self.reference.len() || self.steps >= self.cfg.episode_horizon;
        let too_far = self.mode == Mode::Train && max_body_err > self.cfg.termination_body_err;
        let failed = diverged || too_far;
        self.done = out_of_time || failed;
        let obs = self.observation()?;
        Ok(Transition {
            obs,
            reward: tracking_reward + if diverged { 0.0 } else { aux_reward },
            done: self.done,
            terminal: failed,
            info: StepInfo {
                t_index: self.t_index,
                delta,
                tracking_reward,
                aux_reward,
                emg_reward: r_emg,
                power_reward: r_power,
                muscle_power,
                sphere_forces,
                max_body_err,
                diverged,
                failed,
            },
        })
    }
}

/// Outputs of one synchronized step across all environments (row-major, one
/// row per environment).
#[derive(Debug, Clone, PartialEq)]
pub struct VecStep {
    /// Observation reached by the step, before any automatic reset.
    pub next_obs: Vec<f64>,
    /// Observation to act on next: equal to `next_obs` unless the episode ended.
    pub obs: Vec<f64>,
    pub reward: Vec<f64>,
    pub done: Vec<bool>,
    pub terminal: Vec<bool>,
    pub infos: Vec<StepInfo>,
}

/// Independent training environments stepped in parallel with automatic resets.
#[derive(Debug, Clone)]
pub struct VecEnv {
    envs: Vec<Env>,
    rngs: Vec<ChaCha8Rng>,
    sampler: Option<PhaseSampler>,
}

impl VecEnv {
    pub fn new(
        spec: Arc<ModelSpec>,
        reference: Arc<ReferenceTrajectory>,
        cfg: EnvConfig,
        reward: RewardConfig,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("need at least one environment".into()));
        }
        let sampler = if cfg.rsi { Some(PhaseSampler::new(cfg.adaptive_bins, cfg.adaptive_mix)?) } else { None };
        let proto = Env::new(spec, reference, cfg, reward, Mode::Train)?;
        let rngs = (0..n)
            .map(|i| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(i as u64 + 1);
                r
            })
            .collect();
        Ok(VecEnv { envs: vec![proto; n], rngs, sampler })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    pub fn envs_mut(&mut self) -> &mut [Env] {
        &mut self.envs
    }

    pub fn rngs(&self) -> &[ChaCha8Rng] {
        &self.rngs
    }

    pub fn rngs_mut(&mut self) -> &mut [ChaCha8Rng] {
        &mut self.rngs
    }

    pub fn sampler(&self) -> Option<&PhaseSampler> {
        self.sampler.as_ref()
    }

    pub fn sampler_mut(&mut self) -> Option<&mut PhaseSampler> {
        self.sampler.as_mut()
    }

    pub fn obs_dim(&self) -> usize {
        observation_dim(self.envs[0].spec())
    }

    pub fn act_dim(&self) -> usize {
        self.envs[0].spec().n_muscles()
    }

    pub fn reset_all(&mut self) -> Result<Vec<f64>> {
        let sampler = self.sampler.clone();
        let rows = self
            .envs
            .par_iter_mut()
            .zip(self.rngs.par_iter_mut())
            .map(|(env, rng)| env.reset(sampler.as_ref(), rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(rows.concat())
    }

    /// Current observations of every environment.
    pub fn observations(&self) -> Result<Vec<f64>> {
        Ok(self.envs.iter().map(Env::observation).collect::<Result<Vec<_>>>()?.concat())
    }

    /// Steps every environment with its row of `actions`.
    ///
    /// Finished episodes are reset immediately from a snapshot of the phase
    /// sampler taken before the step; their outcomes are folded into the
    /// sampler afterwards in environment order.
    pub fn step(&mut self, actions: &[f64], tracking: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<VecStep> {
        let na = self.act_dim();
        ensure_dim!(actions.len(), self.len() * na, "batched actions");
        let sampler = self.sampler.clone();
        let results = self
            .envs
            .par_iter_mut()
            .zip(self.rngs.par_iter_mut())
            .zip(actions.par_chunks(na))
            .map(|((env, rng), a)| {
                let tr = env.step(a, tracking)?;
                let outcome = tr.done.then(|| (env.start_bin(), tr.terminal));
                let obs = if tr.done { env.reset(sampler.as_ref(), rng)? } else { tr.obs.clone() };
                Ok((tr, obs, outcome))
            })
            .collect::<Result<Vec<_>>>()?;

        let n = results.len();
        let mut out = VecStep {
            next_obs: Vec::with_capacity(n * self.obs_dim()),
            obs: Vec::with_capacity(n * self.obs_dim()),
            reward: Vec::with_capacity(n),
            done: Vec::with_capacity(n),
            terminal: Vec::with_capacity(n),
            infos: Vec::with_capacity(n),
        };
        for (tr, obs, outcome) in results {
            if let (Some(s), Some((bin, failed))) = (self.sampler.as_mut(), outcome) {
                s.record(bin, failed);
            }
            out.next_obs.extend_from_slice(&tr.obs);
            out.obs.extend_from_slice(&obs);
            out.reward.push(tr.reward);
            out.done.push(tr.done);
            out.terminal.push(tr.terminal);
            out.infos.push(tr.info);
        }
        Ok(out)
    }
}
