//! On-policy learner: a Gaussian initial sampler refined by a learned flow
//! field, a discriminator-based tracking reward, a state-action value used to
//! build flow targets, and the training loop tying them to the environment.

mod disc;
mod eval;
mod experiment;
mod flow;
mod gae;
mod norm;
mod policy;
mod ppo;
mod trainer;

use serde::{Deserialize, Serialize};

pub use disc::{discriminator_loss, discriminator_rewards, reward_from_discriminator, train_discriminator, D_CLAMP};
pub use eval::{evaluate, Controller};
pub use experiment::ExperimentConfig;
pub use flow::{
    build_flow_targets, fit_q, flow_input, flow_loss, q_input, q_loss, train_flow, ActionValue, FlowPairs,
};
pub use gae::{compute_gae, normalize};
pub use norm::RunningNorm;
pub use policy::{gaussian_log_prob, time_features, ActionBatch, Policy, SampleMode, TIME_FEATURES};
pub use ppo::{ppo_update, PpoBatch, PpoOptimizers, PpoStats};
pub use trainer::{append_csv_row, batch_rewards, truncate_csv_rows, Learner, Metrics, RolloutBuffer, Timing, Trainer};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    /// When false the flow field stays at zero and actions are the Gaussian samples.
    pub enabled: bool,
    /// Gradient-ascent steps used to build flow targets.
    pub ascent_steps: usize,
    pub ascent_eta: f64,
    pub ode_steps: usize,
    pub ode_dt: f64,
    /// Upper bound on rollout samples used for flow targets per iteration (all when absent).
    pub max_samples: Option<usize>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { enabled: true, ascent_steps: 20, ascent_eta: 0.01, ode_steps: 20, ode_dt: 0.05, max_samples: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub lr: f64,
    pub value_lr: Option<f64>,
    pub disc_lr: Option<f64>,
    pub q_lr: Option<f64>,
    pub flow_lr: Option<f64>,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub rollout_h: usize,
    pub num_envs: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub init_log_std: f64,
    /// Initial mean excitation of the sampler.
    pub init_action_mean: f64,
    pub max_grad_norm: f64,
    pub grad_penalty: f64,
    pub disc_epochs: usize,
    pub q_epochs: usize,
    pub flow_epochs: usize,
    pub flow: FlowConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_eps: 0.3,
            lr: 3e-5,
            value_lr: None,
            disc_lr: None,
            q_lr: None,
            flow_lr: None,
            entropy_coef: 5e-4,
            epochs: 5,
            minibatches: 4,
            rollout_h: 8,
            num_envs: 256,
            hidden_width: 256,
            hidden_layers: 3,
            init_log_std: -1.0,
            init_action_mean: 0.3,
            max_grad_norm: 1.0,
            grad_penalty: 10.0,
            disc_epochs: 1,
            q_epochs: 1,
            flow_epochs: 1,
            flow: FlowConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        let rates = [Some(self.lr), self.value_lr, self.disc_lr, self.q_lr, self.flow_lr];
        if rates.iter().flatten().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("learning rates must be positive");
        }
        if !(self.clip_eps > 0.0) || !(self.entropy_coef >= 0.0) || !(self.grad_penalty >= 0.0) {
            return bad("clip_eps must be positive; entropy_coef and grad_penalty non-negative");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        if self.epochs == 0 || self.minibatches == 0 || self.rollout_h == 0 || self.num_envs == 0 {
            return bad("epochs, minibatches, rollout_h and num_envs must be at least 1");
        }
        if self.minibatches > self.rollout_h * self.num_envs {
            return bad("more minibatches than samples per rollout");
        }
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return bad("networks need at least one hidden layer of positive width");
        }
        if !self.init_log_std.is_finite() || !self.init_action_mean.is_finite() {
            return bad("initial sampler parameters must be finite");
        }
        let f = &self.flow;
        if f.ascent_steps == 0 || f.ode_steps == 0 || !(f.ascent_eta > 0.0) || !(f.ode_dt > 0.0) {
            return bad("flow step counts and sizes must be positive");
        }
        if (f.ode_steps as f64 * f.ode_dt - 1.0).abs() > 1e-9 {
            return bad("flow ode_steps * ode_dt must equal 1");
        }
        if f.max_samples == Some(0) {
            return bad("flow max_samples must be positive");
        }
        Ok(())
    }

    pub fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_layers]
    }

    pub fn steps_per_iteration(&self) -> usize {
        self.rollout_h * self.num_envs
    }
}

/// Fixed-order minibatch partition of a shuffled index list.
pub(crate) fn minibatches(perm: &[usize], count: usize) -> impl Iterator<Item = &[usize]> {
    let n = perm.len();
    (0..count).map(move |k| &perm[k * n / count..(k + 1) * n / count]).filter(|c| !c.is_empty())
}

/// Rows `idx` of a row-major matrix with `width` columns.
pub(crate) fn gather(data: &[f64], width: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        out.extend_from_slice(&data[i * width..(i + 1) * width]);
    }
    out
}
