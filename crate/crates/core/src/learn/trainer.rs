use std::fs::OpenOptions;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    build_flow_targets, compute_gae, discriminator_rewards, evaluate, fit_q, gather, normalize, ppo_update,
    reward_from_discriminator, train_discriminator, train_flow, Controller, ExperimentConfig, Policy, PpoBatch,
    PpoOptimizers, RunningNorm, SampleMode, TrainConfig,
};
use crate::analyze::{RolloutLog, TrackingSummary};
use crate::env::{observation_dim, EnvConfig, PhaseSampler, ReferenceTrajectory, RewardConfig, TrackingError, VecEnv};
use crate::muscle::MuscleState;
use crate::nn::{Adam, Checkpoint, Head, Mlp};
use crate::skeleton::{ModelSpec, SimState};
use crate::{Error, Result};

/// Every learned component with its optimizer state and the learner's RNG.
#[derive(Debug, Clone)]
pub struct Learner {
    pub policy: Policy,
    pub value: Mlp,
    pub disc: Mlp,
    pub q: Mlp,
    /// Observation statistics, frozen during an iteration.
    pub norm: RunningNorm,
    pub ppo_opt: PpoOptimizers,
    pub disc_opt: Adam,
    pub q_opt: Adam,
    pub flow_opt: Adam,
    pub rng: ChaCha8Rng,
}

impl Learner {
    pub fn new(obs_dim: usize, act_dim: usize, delta_dim: usize, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = cfg.hidden();
        let widths = |n_in: usize| {
            let mut w = vec![n_in];
            w.extend_from_slice(&hidden);
            w.push(1);
            w
        };
        let policy = Policy::new(
            obs_dim,
            act_dim,
            &hidden,
            cfg.init_log_std,
            cfg.init_action_mean,
            cfg.flow.clone(),
            &mut rng,
        )?;
        let value = Mlp::new(&widths(obs_dim), Head::Linear, 1.0, &mut rng)?;
        let disc = Mlp::new(&widths(delta_dim), Head::Sigmoid, 0.0, &mut rng)?;
        let q = Mlp::new(&widths(obs_dim + act_dim), Head::Linear, 0.0, &mut rng)?;
        let ppo_opt = PpoOptimizers::new(&policy, &value, cfg.lr, cfg.value_lr.unwrap_or(cfg.lr));
        Ok(Learner {
            disc_opt: Adam::new(disc.n_params(), cfg.disc_lr.unwrap_or(cfg.lr)),
            q_opt: Adam::new(q.n_params(), cfg.q_lr.unwrap_or(cfg.lr)),
            flow_opt: Adam::new(policy.flow.n_params(), cfg.flow_lr.unwrap_or(cfg.lr)),
            policy,
            value,
            disc,
            q,
            norm: RunningNorm::new(obs_dim),
            ppo_opt,
            rng,
        })
    }

    /// Imitation reward of a tracking-error vector under the current discriminator.
    pub fn tracking_reward(&self, delta: &[f64]) -> f64 {
        self.disc.forward(delta).map_or(f64::NAN, |d| reward_from_discriminator(d[0]))
    }

    /// Deterministic actions for raw observations.
    pub fn act(&self, raw_obs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.policy.sample(&self.norm.apply(raw_obs), batch, &mut rng, SampleMode::Deterministic)?.a)
    }

    pub fn write(&self, ck: &mut Checkpoint) {
        put_mlp(ck, "policy.mean", &self.policy.mean);
        ck.push("policy.log_std", vec![self.policy.log_std.len()], self.policy.log_std.clone());
        put_mlp(ck, "policy.flow", &self.policy.flow);
        put_mlp(ck, "value", &self.value);
        put_mlp(ck, "disc", &self.disc);
        put_mlp(ck, "q", &self.q);
        ck.push("norm.mean", vec![self.norm.dim()], self.norm.mean.clone());
        ck.push("norm.m2", vec![self.norm.dim()], self.norm.m2.clone());
        ck.push("norm.count", vec![1], vec![self.norm.count]);
        put_adam(ck, "opt.mean", &self.ppo_opt.mean);
        put_adam(ck, "opt.log_std", &self.ppo_opt.log_std);
        put_adam(ck, "opt.value", &self.ppo_opt.value);
        put_adam(ck, "opt.disc", &self.disc_opt);
        put_adam(ck, "opt.q", &self.q_opt);
        put_adam(ck, "opt.flow", &self.flow_opt);
        ck.set_meta("rng.learner", rng_to_string(&self.rng));
    }

    /// Overwrites parameters and optimizer state; shapes must match this learner.
    pub fn read(&mut self, ck: &Checkpoint) -> Result<()> {
        get_mlp(ck, "policy.mean", &mut self.policy.mean)?;
        let n = self.policy.log_std.len();
        self.policy.log_std.copy_from_slice(ck.get("policy.log_std", &[n])?);
        get_mlp(ck, "policy.flow", &mut self.policy.flow)?;
        get_mlp(ck, "value", &mut self.value)?;
        get_mlp(ck, "disc", &mut self.disc)?;
        get_mlp(ck, "q", &mut self.q)?;
        let d = self.norm.dim();
        self.norm.mean.copy_from_slice(ck.get("norm.mean", &[d])?);
        self.norm.m2.copy_from_slice(ck.get("norm.m2", &[d])?);
        self.norm.count = ck.get("norm.count", &[1])?[0];
        get_adam(ck, "opt.mean", &mut self.ppo_opt.mean)?;
        get_adam(ck, "opt.log_std", &mut self.ppo_opt.log_std)?;
        get_adam(ck, "opt.value", &mut self.ppo_opt.value)?;
        get_adam(ck, "opt.disc", &mut self.disc_opt)?;
        get_adam(ck, "opt.q", &mut self.q_opt)?;
        get_adam(ck, "opt.flow", &mut self.flow_opt)?;
        self.rng = rng_from_string(ck.meta("rng.learner")?)?;
        Ok(())
    }
}

fn put_mlp(ck: &mut Checkpoint, name: &str, net: &Mlp) {
    ck.push(name, vec![net.n_params()], net.params().to_vec());
}

fn get_mlp(ck: &Checkpoint, name: &str, net: &mut Mlp) -> Result<()> {
    let n = net.n_params();
    net.params_mut().copy_from_slice(ck.get(name, &[n])?);
    Ok(())
}

fn put_adam(ck: &mut Checkpoint, name: &str, opt: &Adam) {
    ck.push(format!("{name}.m"), vec![opt.m.len()], opt.m.clone());
    ck.push(format!("{name}.v"), vec![opt.v.len()], opt.v.clone());
    ck.set_meta(format!("{name}.step"), opt.step);
}

fn get_adam(ck: &Checkpoint, name: &str, opt: &mut Adam) -> Result<()> {
    let n = opt.m.len();
    opt.m.copy_from_slice(ck.get(&format!("{name}.m"), &[n])?);
    opt.v.copy_from_slice(ck.get(&format!("{name}.v"), &[n])?);
    opt.step = parse_meta(ck, &format!("{name}.step"))?;
    Ok(())
}

fn parse_meta<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T> {
    let s = ck.meta(key)?;
    s.parse().map_err(|_| Error::Contract(format!("checkpoint metadata '{key}' = '{s}' is malformed")))
}

/// `seed-hex:stream:word_pos`, enough to continue the exact stream.
fn rng_to_string(rng: &ChaCha8Rng) -> String {
    let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    format!("{seed}:{}:{}", rng.get_stream(), rng.get_word_pos())
}

fn rng_from_string(s: &str) -> Result<ChaCha8Rng> {
    let bad = || Error::Contract(format!("malformed RNG state '{s}'"));
    let mut parts = s.split(':');
    let (Some(hex), Some(stream), Some(pos), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(bad());
    };
    if hex.len() != 64 {
        return Err(bad());
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream.parse().map_err(|_| bad())?);
    rng.set_word_pos(pos.parse().map_err(|_| bad())?);
    Ok(rng)
}

/// Transitions of one iteration in step-major order (`step * n_envs + env`).
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub delta_dim: usize,
    /// Normalized observations.
    pub obs: Vec<f64>,
    pub raw_obs: Vec<f64>,
    pub a0: Vec<f64>,
    /// Transported actions before clipping.
    pub a: Vec<f64>,
    pub logp: Vec<f64>,
    pub reward: Vec<f64>,
    pub tracking_reward: Vec<f64>,
    pub aux_reward: Vec<f64>,
    pub done: Vec<bool>,
    pub terminal: Vec<bool>,
    pub value: Vec<f64>,
    /// Value of the state each transition reached, before any reset.
    pub next_value: Vec<f64>,
    pub delta: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// One row of the per-iteration metrics file; deterministic for a fixed seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub iteration: usize,
    pub env_steps: u64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub disc_loss: f64,
    pub q_loss: f64,
    pub flow_loss: f64,
    pub mean_reward: f64,
    pub mean_tracking_reward: f64,
    pub mean_aux_reward: f64,
    /// Training-rollout mean joint error, degrees.
    pub e_joint_deg: f64,
    /// Training-rollout mean root-relative key-body error, m.
    pub e_body_m: f64,
    pub episodes: usize,
    pub failures: usize,
    pub flow_pairs: usize,
    pub flow_not_improved: usize,
    pub flow_dropped: usize,
    pub eval_e_joint_deg: Option<f64>,
    pub eval_e_body_m: Option<f64>,
    pub eval_mean_abs_power: Option<f64>,
}

/// Wall-clock figures of one iteration, kept apart from [`Metrics`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub iteration: usize,
    pub env_steps: u64,
    pub sps: f64,
    pub collect_seconds: f64,
    pub update_seconds: f64,
    pub wall_clock: f64,
}

/// Training state: learner, environments and counters.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub spec: Arc<ModelSpec>,
    pub reference: Arc<ReferenceTrajectory>,
    pub train: TrainConfig,
    pub env_cfg: EnvConfig,
    pub reward: RewardConfig,
    pub seed: u64,
    pub learner: Learner,
    pub envs: VecEnv,
    obs: Vec<f64>,
    pub iteration: usize,
    pub env_steps: u64,
    started: Instant,
}

impl Trainer {
    pub fn new(
        spec: Arc<ModelSpec>,
        reference: Arc<ReferenceTrajectory>,
        train: TrainConfig,
        env_cfg: EnvConfig,
        reward: RewardConfig,
        seed: u64,
    ) -> Result<Self> {
        train.validate()?;
        let mut envs =
            VecEnv::new(spec.clone(), reference.clone(), env_cfg.clone(), reward.clone(), train.num_envs, seed)?;
        let obs = envs.reset_all()?;
        let learner =
            Learner::new(observation_dim(&spec), spec.n_muscles(), TrackingError::dim(&spec), &train, seed)?;
        Ok(Trainer {
            spec,
            reference,
            train,
            env_cfg,
            reward,
            seed,
            learner,
            envs,
            obs,
            iteration: 0,
            env_steps: 0,
            started: Instant::now(),
        })
    }

    pub fn from_experiment(cfg: &ExperimentConfig) -> Result<Self> {
        let (spec, reference) = cfg.validate()?;
        Self::new(
            Arc::new(spec),
            Arc::new(reference),
            cfg.train.clone(),
            cfg.env.clone(),
            cfg.reward.clone(),
            cfg.seed,
        )
    }

    /// Current raw observations of every environment.
    pub fn observations(&self) -> &[f64] {
        &self.obs
    }

    /// Collect, then update sampler and critic, discriminator, action value and
    /// flow field. State is only committed when every stage succeeds.
    pub fn train_iteration(&mut self) -> Result<(Metrics, Timing)> {
        let t0 = Instant::now();
        let mut l = self.learner.clone();
        let mut envs = self.envs.clone();
        let mut obs = self.obs.clone();
        let (buf, episodes, failures) = collect(&mut l, &mut envs, &mut obs, self.train.rollout_h)?;
        let collect_seconds = t0.elapsed().as_secs_f64();

        let cfg = &self.train;
        let n = buf.len();
        let (adv, returns) = compute_gae(
            &buf.reward,
            &buf.value,
            &buf.next_value,
            &buf.done,
            &buf.terminal,
            buf.n_envs,
            cfg.gamma,
            cfg.gae_lambda,
        )?;
        let mut adv_n = adv.clone();
        normalize(&mut adv_n);
        let batch = PpoBatch { obs: &buf.obs, a0: &buf.a0, logp_old: &buf.logp, adv: &adv_n, returns: &returns };
        let ppo = ppo_update(&mut l.policy, &mut l.value, &mut l.ppo_opt, batch, cfg, &mut l.rng)?;

        let disc_loss = train_discriminator(
            &mut l.disc,
            &mut l.disc_opt,
            &buf.delta,
            n,
            cfg.grad_penalty,
            cfg.disc_epochs,
            cfg.minibatches,
            cfg.max_grad_norm,
            &mut l.rng,
        )?;
        let q_loss = fit_q(
            &mut l.q,
            &mut l.q_opt,
            &buf.obs,
            &buf.a,
            &returns,
            cfg.q_epochs,
            cfg.minibatches,
            cfg.max_grad_norm,
            &mut l.rng,
        )?;

        let (mut flow_loss, mut flow_pairs, mut not_improved, mut dropped) = (0.0, 0, 0, 0);
        if cfg.flow.enabled {
            let m = cfg.flow.max_samples.unwrap_or(n).min(n);
            let mut idx: Vec<usize> = if m < n { index::sample(&mut l.rng, n, m).into_vec() } else { (0..n).collect() };
            idx.sort_unstable();
            let obs_sub = gather(&buf.obs, buf.obs_dim, &idx);
            let a0_sub = gather(&buf.a0, buf.act_dim, &idx);
            let pairs = build_flow_targets(&l.q, &obs_sub, &a0_sub, m, cfg.flow.ascent_steps, cfg.flow.ascent_eta)?;
            flow_pairs = pairs.len();
            not_improved = pairs.not_improved;
            dropped = pairs.dropped;
            if !pairs.is_empty() {
                flow_loss = train_flow(
                    &mut l.policy.flow,
                    &mut l.flow_opt,
                    &pairs,
                    &obs_sub,
                    cfg.flow_epochs,
                    cfg.minibatches,
                    cfg.max_grad_norm,
                    &mut l.rng,
                )?;
            }
        }
        l.norm.update(&buf.raw_obs)?;

        let (e_joint_deg, e_body_m) = delta_errors(&self.spec, &buf.delta, n);
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len().max(1) as f64;
        let metrics = Metrics {
            iteration: self.iteration + 1,
            env_steps: self.env_steps + n as u64,
            policy_loss: ppo.policy_loss,
            value_loss: ppo.value_loss,
            entropy: ppo.entropy,
            approx_kl: ppo.approx_kl,
            clip_frac: ppo.clip_frac,
            disc_loss,
            q_loss,
            flow_loss,
            mean_reward: mean(&buf.reward),
            mean_tracking_reward: mean(&buf.tracking_reward),
            mean_aux_reward: mean(&buf.aux_reward),
            e_joint_deg,
            e_body_m,
            episodes,
            failures,
            flow_pairs,
            flow_not_improved: not_improved,
            flow_dropped: dropped,
            eval_e_joint_deg: None,
            eval_e_body_m: None,
            eval_mean_abs_power: None,
        };
        for (name, v) in [
            ("policy", metrics.policy_loss),
            ("value", metrics.value_loss),
            ("discriminator", metrics.disc_loss),
            ("action value", metrics.q_loss),
            ("flow", metrics.flow_loss),
        ] {
            if !v.is_finite() {
                return Err(Error::Contract(format!("non-finite {name} loss; iteration discarded")));
            }
        }

        self.learner = l;
        self.envs = envs;
        self.obs = obs;
        self.iteration += 1;
        self.env_steps += n as u64;
        let elapsed = t0.elapsed().as_secs_f64();
        let timing = Timing {
            iteration: self.iteration,
            env_steps: self.env_steps,
            sps: n as f64 / elapsed.max(1e-12),
            collect_seconds,
            update_seconds: elapsed - collect_seconds,
            wall_clock: self.started.elapsed().as_secs_f64(),
        };
        Ok((metrics, timing))
    }

    /// Deterministic start-to-end rollout of the current policy.
    pub fn evaluate(&self, seed: u64) -> Result<(RolloutLog, TrackingSummary)> {
        let l = &self.learner;
        evaluate(
            self.spec.clone(),
            self.reference.clone(),
            &self.env_cfg,
            &self.reward,
            Controller::Policy { policy: &l.policy, norm: &l.norm },
            &|d: &[f64]| l.tracking_reward(d),
            seed,
        )
    }

    /// Full resumable state: learner, environments, phase sampler and RNG streams.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        self.learner.write(&mut ck);
        ck.set_meta("kind", "train");
        ck.set_meta("iteration", self.iteration);
        ck.set_meta("env_steps", self.env_steps);
        ck.set_meta("seed", self.seed);
        ck.set_meta("model", &self.spec.name);
        let width = env_row_width(&self.spec);
        let mut rows = Vec::with_capacity(self.envs.len() * width);
        for env in self.envs.envs() {
            let s = env.state();
            rows.extend_from_slice(&s.q);
            rows.extend_from_slice(&s.dq);
            for m in &s.muscles {
                rows.extend_from_slice(&[m.act, m.l_m, m.v_m, m.f_m]);
            }
            rows.extend_from_slice(&[
                s.t,
                env.t_index() as f64,
                env.steps() as f64,
                env.start_bin() as f64,
                if env.is_done() { 1.0 } else { 0.0 },
            ]);
        }
        ck.push("envs", vec![self.envs.len(), width], rows);
        if let Some(s) = self.envs.sampler() {
            ck.push("sampler.rates", vec![s.bins()], s.rates().to_vec());
        }
        for (i, r) in self.envs.rngs().iter().enumerate() {
            ck.set_meta(format!("rng.env.{i}"), rng_to_string(r));
        }
        ck
    }

    pub fn save_checkpoint(&self, dir: &Path, extra_meta: &[(String, String)]) -> Result<()> {
        let mut ck = self.checkpoint();
        for (k, v) in extra_meta {
            ck.set_meta(k.clone(), v);
        }
        ck.save(dir)
    }

    /// Restores a state saved by [`Trainer::checkpoint`] into a trainer built
    /// from the same configuration.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        if ck.meta("kind")? != "train" {
            return Err(Error::Contract("not a training checkpoint".into()));
        }
        let mut learner = self.learner.clone();
        learner.read(ck)?;
        let mut envs = self.envs.clone();
        let width = env_row_width(&self.spec);
        let rows = ck.get("envs", &[envs.len(), width])?;
        let (nq, nm) = (self.spec.n_q(), self.spec.n_muscles());
        for (env, row) in envs.envs_mut().iter_mut().zip(rows.chunks(width)) {
            let muscles = row[2 * nq..2 * nq + 4 * nm]
                .chunks(4)
                .map(|c| MuscleState { act: c[0], l_m: c[1], v_m: c[2], f_m: c[3] })
                .collect();
            let tail = &row[2 * nq + 4 * nm..];
            let state = SimState { q: row[..nq].to_vec(), dq: row[nq..2 * nq].to_vec(), muscles, t: tail[0] };
            env.restore(state, tail[1] as usize, tail[2] as usize, tail[3] as usize, tail[4] != 0.0)?;
        }
        if let Some(s) = envs.sampler_mut() {
            let bins = s.bins();
            *s = PhaseSampler::with_rates(ck.get("sampler.rates", &[bins])?.to_vec(), self.env_cfg.adaptive_mix)?;
        }
        for (i, r) in envs.rngs_mut().iter_mut().enumerate() {
            *r = rng_from_string(ck.meta(&format!("rng.env.{i}"))?)?;
        }
        self.obs = envs.observations()?;
        self.envs = envs;
        self.learner = learner;
        self.iteration = parse_meta(ck, "iteration")?;
        self.env_steps = parse_meta(ck, "env_steps")?;
        Ok(())
    }

    pub fn load_checkpoint(&mut self, dir: &Path) -> Result<()> {
        self.restore(&Checkpoint::load(dir)?)
    }
}

fn env_row_width(spec: &ModelSpec) -> usize {
    2 * spec.n_q() + 4 * spec.n_muscles() + 5
}

/// Mean absolute joint error (degrees) and mean key-body error (m) over a batch of Δ rows.
fn delta_errors(spec: &ModelSpec, delta: &[f64], n: usize) -> (f64, f64) {
    let dim = TrackingError::dim(spec);
    let nj = spec.n_q() - spec.root_dofs();
    let nk = spec.n_key();
    let (mut ej, mut eb) = (0.0, 0.0);
    for row in delta.chunks(dim) {
        ej += row[3..3 + nj].iter().map(|v| v.abs()).sum::<f64>() / nj.max(1) as f64;
        eb += row[3 + nj..].chunks(2).map(|c| c[0].hypot(c[1])).sum::<f64>() / nk.max(1) as f64;
    }
    let n = n.max(1) as f64;
    ((ej / n).to_degrees(), eb / n)
}

fn collect(
    l: &mut Learner,
    envs: &mut VecEnv,
    obs: &mut Vec<f64>,
    horizon: usize,
) -> Result<(RolloutBuffer, usize, usize)> {
    let n = envs.len();
    let (no, na) = (envs.obs_dim(), envs.act_dim());
    let mut buf = RolloutBuffer { n_envs: n, obs_dim: no, act_dim: na, ..RolloutBuffer::default() };
    let (mut episodes, mut failures) = (0, 0);
    for _ in 0..horizon {
        let on = l.norm.apply(obs);
        let batch = l.policy.sample(&on, n, &mut l.rng, SampleMode::Explore)?;
        let values = l.value.forward_batch(&on, n)?;
        let disc = &l.disc;
        let reward_fn = |d: &[f64]| disc.forward(d).map_or(f64::NAN, |o| reward_from_discriminator(o[0]));
        let step = envs.step(&batch.a, &reward_fn)?;
        if let Some(i) = step.reward.iter().position(|r| !r.is_finite()) {
            return Err(Error::Contract(format!("non-finite reward in environment {i}")));
        }
        let next_values = l.value.forward_batch(&l.norm.apply(&step.next_obs), n)?;
        buf.obs.extend_from_slice(&on);
        buf.raw_obs.extend_from_slice(obs);
        buf.a0.extend_from_slice(&batch.a0);
        buf.a.extend_from_slice(&batch.a);
        buf.logp.extend_from_slice(&batch.logp);
        buf.value.extend_from_slice(&values);
        buf.next_value.extend_from_slice(&next_values);
        buf.reward.extend_from_slice(&step.reward);
        buf.done.extend_from_slice(&step.done);
        buf.terminal.extend_from_slice(&step.terminal);
        for info in &step.infos {
            buf.tracking_reward.push(info.tracking_reward);
            buf.aux_reward.push(info.aux_reward);
            buf.delta.extend_from_slice(&info.delta);
        }
        episodes += step.done.iter().filter(|d| **d).count();
        failures += step.terminal.iter().filter(|d| **d).count();
        *obs = step.obs;
    }
    buf.delta_dim = buf.delta.len() / buf.len().max(1);
    Ok((buf, episodes, failures))
}

/// Appends `row` to a CSV file, writing the header when the file is new or empty.
pub fn append_csv_row<T: Serialize>(path: &Path, row: &T) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(row).map_err(|e| Error::parse(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Drops data rows whose first column (the iteration) exceeds `iteration`.
pub fn truncate_csv_rows(path: &Path, iteration: usize) -> Result<()> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        let keep = i == 0
            || line.split(',').next().and_then(|s| s.parse::<usize>().ok()).is_some_and(|it| it <= iteration);
        if keep {
            out.push_str(line);
            out.push('\n');
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Discriminator rewards of a batch of tracking errors under a learner.
pub fn batch_rewards(l: &Learner, deltas: &[f64], n: usize) -> Result<Vec<f64>> {
    discriminator_rewards(&l.disc, deltas, n)
}
