use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::FlowConfig;
use crate::error::ensure_dim;
use crate::nn::{Head, Mlp};
use crate::{Error, Result};

/// Number of scalar features encoding the flow time.
pub const TIME_FEATURES: usize = 3;

/// `[t, sin 2πt, cos 2πt]`.
pub fn time_features(t: f64) -> [f64; TIME_FEATURES] {
    [t, (2.0 * PI * t).sin(), (2.0 * PI * t).cos()]
}

/// Log density of `x` under a diagonal Gaussian.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    let half_log_2pi = 0.5 * (2.0 * PI).ln();
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), x)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - half_log_2pi
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Explore,
    Deterministic,
}

/// Batched sampler output, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBatch {
    /// Transported actions, unclamped.
    pub a: Vec<f64>,
    /// Initial samples.
    pub a0: Vec<f64>,
    /// Log density of each initial sample under the Gaussian.
    pub logp: Vec<f64>,
}

/// Gaussian initial sampler plus flow field over `(t, obs, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub mean: Mlp,
    pub log_std: Vec<f64>,
    pub flow: Mlp,
    pub flow_cfg: FlowConfig,
}

impl Policy {
    /// Mean network with a final layer scaled toward zero around
    /// `init_mean`, and a zero flow field.
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        init_mean: f64,
        flow_cfg: FlowConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut widths = vec![obs_dim];
        widths.extend_from_slice(hidden);
        widths.push(act_dim);
        let head = Head::Affine { scale: vec![1.0; act_dim], shift: vec![init_mean; act_dim] };
        let mean = Mlp::new(&widths, head, 0.01, rng)?;
        widths[0] = TIME_FEATURES + obs_dim + act_dim;
        let flow = Mlp::new(&widths, Head::Linear, 0.0, rng)?;
        Ok(Policy { mean, log_std: vec![init_log_std; act_dim], flow, flow_cfg })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.n_in()
    }

    pub fn act_dim(&self) -> usize {
        self.mean.n_out()
    }

    pub fn sample(&self, obs: &[f64], batch: usize, rng: &mut impl Rng, mode: SampleMode) -> Result<ActionBatch> {
        let na = self.act_dim();
        let mean = self.mean.forward_batch(obs, batch)?;
        let a0: Vec<f64> = match mode {
            SampleMode::Deterministic => mean.clone(),
            SampleMode::Explore => mean
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let e: f64 = rng.sample(StandardNormal);
                    m + self.log_std[i % na].exp() * e
                })
                .collect(),
        };
        let logp = (0..batch)
            .map(|b| gaussian_log_prob(&mean[b * na..(b + 1) * na], &self.log_std, &a0[b * na..(b + 1) * na]))
            .collect();
        let a = self.transport(obs, &a0, batch)?;
        Ok(ActionBatch { a, a0, logp })
    }

    /// Single-observation convenience wrapper around [`Policy::sample`].
    pub fn sample_action(&self, obs: &[f64], rng: &mut impl Rng, mode: SampleMode) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let out = self.sample(obs, 1, rng, mode)?;
        Ok((out.a, out.a0, out.logp[0]))
    }

    /// Explicit Euler integration of the flow field over unit time.
    pub fn transport(&self, obs: &[f64], a0: &[f64], batch: usize) -> Result<Vec<f64>> {
        let (no, na) = (self.obs_dim(), self.act_dim());
        ensure_dim!(obs.len(), batch * no, "observation batch");
        ensure_dim!(a0.len(), batch * na, "initial action batch");
        let mut a = a0.to_vec();
        if !self.flow_cfg.enabled {
            return Ok(a);
        }
        let width = TIME_FEATURES + no + na;
        let mut x = vec![0.0; batch * width];
        let dt = self.flow_cfg.ode_dt;
        for k in 0..self.flow_cfg.ode_steps {
            let tf = time_features(k as f64 * dt);
            for b in 0..batch {
                let row = &mut x[b * width..(b + 1) * width];
                row[..TIME_FEATURES].copy_from_slice(&tf);
                row[TIME_FEATURES..TIME_FEATURES + no].copy_from_slice(&obs[b * no..(b + 1) * no]);
                row[TIME_FEATURES + no..].copy_from_slice(&a[b * na..(b + 1) * na]);
            }
            let v = self.flow.forward_batch(&x, batch)?;
            for (ai, vi) in a.iter_mut().zip(&v) {
                *ai += vi * dt;
            }
            if let Some(i) = a.iter().position(|v| !v.is_finite()) {
                return Err(Error::Sampling(format!(
                    "flow step {k} produced a non-finite action (sample {}, dimension {})",
                    i / na,
                    i % na
                )));
            }
        }
        Ok(a)
    }
}
