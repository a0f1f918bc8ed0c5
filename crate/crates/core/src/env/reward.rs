use serde::{Deserialize, Serialize};

use crate::error::ensure_dim;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    ImitationOnly,
    ImitationEmg,
    ImitationPower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub mode: RewardMode,
    pub w_emg: f64,
    pub w_power: f64,
    /// Muscle index for each measured activation channel.
    pub emg_channel_map: Vec<usize>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { mode: RewardMode::ImitationOnly, w_emg: 100.0, w_power: 0.1, emg_channel_map: Vec::new() }
    }
}

impl RewardConfig {
    pub fn validate(&self, n_muscles: usize, n_measured: usize) -> Result<()> {
        if !(self.w_emg >= 0.0 && self.w_power >= 0.0) {
            return Err(Error::Config("reward weights must be non-negative".into()));
        }
        if let Some(&bad) = self.emg_channel_map.iter().find(|&&m| m >= n_muscles) {
            return Err(Error::Config(format!("emg channel maps to muscle {bad}, model has {n_muscles}")));
        }
        if self.mode == RewardMode::ImitationEmg {
            if self.emg_channel_map.is_empty() {
                return Err(Error::Config("imitation_emg needs a non-empty emg_channel_map".into()));
            }
            if self.emg_channel_map.len() != n_measured {
                return Err(Error::Config(format!(
                    "emg_channel_map has {} entries but the reference has {n_measured} emg channels",
                    self.emg_channel_map.len()
                )));
            }
        }
        Ok(())
    }
}

/// Negative mean squared difference between simulated and measured activations.
pub fn emg_reward(act_sim: &[f64], act_measure: &[f64]) -> Result<f64> {
    ensure_dim!(act_sim.len(), act_measure.len(), "emg channels");
    if act_sim.is_empty() {
        return Err(Error::Contract("emg reward needs at least one channel".into()));
    }
    let sse: f64 = act_sim.iter().zip(act_measure).map(|(s, m)| (m - s) * (m - s)).sum();
    Ok(-sse / act_sim.len() as f64)
}

/// Negative mean absolute mechanical power `|F · v|` over muscles, watts.
pub fn power_reward(force: &[f64], speed: &[f64]) -> Result<f64> {
    ensure_dim!(force.len(), speed.len(), "muscle power terms");
    if force.is_empty() {
        return Err(Error::Contract("power reward needs at least one muscle".into()));
    }
    let total: f64 = force.iter().zip(speed).map(|(f, v)| (f * v).abs()).sum();
    Ok(-total / force.len() as f64)
}
