use rand::seq::SliceRandom;
use rand::Rng;

use super::policy::gaussian_log_prob;
use super::{gather, minibatches, Policy, TrainConfig};
use crate::error::ensure_dim;
use crate::nn::{clip_grad_norm, Adam, Mlp};
use crate::{Error, Result};

/// Samples for one clipped policy-gradient update, row-major.
#[derive(Debug, Clone, Copy)]
pub struct PpoBatch<'a> {
    pub obs: &'a [f64],
    pub a0: &'a [f64],
    pub logp_old: &'a [f64],
    /// Normalized advantages.
    pub adv: &'a [f64],
    pub returns: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct PpoOptimizers {
    pub mean: Adam,
    pub log_std: Adam,
    pub value: Adam,
}

impl PpoOptimizers {
    pub fn new(policy: &Policy, value: &Mlp, lr: f64, value_lr: f64) -> Self {
        PpoOptimizers {
            mean: Adam::new(policy.mean.n_params(), lr),
            log_std: Adam::new(policy.log_std.len(), lr),
            value: Adam::new(value.n_params(), value_lr),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoStats {
    /// Clipped surrogate loss, without the entropy bonus.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    /// Largest `|ratio - 1|` on the first minibatch, before any parameter change.
    pub initial_ratio_dev: f64,
}

fn entropy(log_std: &[f64]) -> f64 {
    let c = 0.5 * (1.0 + (2.0 * std::f64::consts::PI).ln());
    log_std.iter().map(|l| l + c).sum()
}

/// Clipped surrogate update of the Gaussian sampler and squared-error
/// regression of the value network, over `epochs` passes of shuffled minibatches.
pub fn ppo_update(
    policy: &mut Policy,
    value: &mut Mlp,
    opt: &mut PpoOptimizers,
    batch: PpoBatch,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<PpoStats> {
    let (no, na) = (policy.obs_dim(), policy.act_dim());
    let n = batch.adv.len();
    ensure_dim!(batch.obs.len(), n * no, "ppo observations");
    ensure_dim!(batch.a0.len(), n * na, "ppo actions");
    ensure_dim!(batch.logp_old.len(), n, "ppo log-probabilities");
    ensure_dim!(batch.returns.len(), n, "ppo returns");

    let mut stats = PpoStats::default();
    let mut updates = 0usize;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut first = true;
    for _ in 0..cfg.epochs {
        perm.shuffle(rng);
        for idx in minibatches(&perm, cfg.minibatches) {
            let m = idx.len();
            let obs = gather(batch.obs, no, idx);
            let a0 = gather(batch.a0, na, idx);
            let tape = policy.mean.forward_tape(&obs, m)?;
            let std: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();

            let mut up_mean = vec![0.0; m * na];
            let mut g_log_std = vec![-cfg.entropy_coef; na];
            let (mut loss, mut kl, mut clipped) = (0.0, 0.0, 0usize);
            for (r, &i) in idx.iter().enumerate() {
                let mu = &tape.out[r * na..(r + 1) * na];
                let x = &a0[r * na..(r + 1) * na];
                let logp = gaussian_log_prob(mu, &policy.log_std, x);
                let log_ratio = logp - batch.logp_old[i];
                let ratio = log_ratio.exp();
                if first {
                    stats.initial_ratio_dev = stats.initial_ratio_dev.max((ratio - 1.0).abs());
                }
                let a = batch.adv[i];
                let unclipped = ratio * a;
                let clipped_term = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a;
                loss -= unclipped.min(clipped_term) / m as f64;
                kl += ((ratio - 1.0) - log_ratio) / m as f64;
                if (ratio - 1.0).abs() > cfg.clip_eps {
                    clipped += 1;
                }
                if unclipped <= clipped_term {
                    // d(-ratio*A)/d logp = -ratio*A
                    let coef = -unclipped / m as f64;
                    for j in 0..na {
                        let z = (x[j] - mu[j]) / std[j];
                        up_mean[r * na + j] = coef * z / std[j];
                        g_log_std[j] += coef * (z * z - 1.0);
                    }
                }
            }
            first = false;
            let ent = entropy(&policy.log_std);

            let v_tape = value.forward_tape(&obs, m)?;
            let mut v_loss = 0.0;
            let mut up_v = vec![0.0; m];
            for (r, &i) in idx.iter().enumerate() {
                let d = v_tape.out[r] - batch.returns[i];
                v_loss += d * d / m as f64;
                up_v[r] = 2.0 * d / m as f64;
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss("policy surrogate"));
            }
            if !v_loss.is_finite() {
                return Err(Error::NonFiniteLoss("value regression"));
            }

            let mut g_mean = vec![0.0; policy.mean.n_params()];
            policy.mean.backward(&tape, &up_mean, Some(&mut g_mean))?;
            let mut g_value = vec![0.0; value.n_params()];
            value.backward(&v_tape, &up_v, Some(&mut g_value))?;
            clip_grad_norm(&mut g_mean, cfg.max_grad_norm);
            clip_grad_norm(&mut g_log_std, cfg.max_grad_norm);
            clip_grad_norm(&mut g_value, cfg.max_grad_norm);
            opt.mean.update(policy.mean.params_mut(), &g_mean)?;
            opt.log_std.update(&mut policy.log_std, &g_log_std)?;
            opt.value.update(value.params_mut(), &g_value)?;

            stats.policy_loss += loss;
            stats.value_loss += v_loss;
            stats.entropy += ent;
            stats.approx_kl += kl;
            stats.clip_frac += clipped as f64 / m as f64;
            updates += 1;
        }
    }
    let k = updates.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_frac /= k;
    Ok(stats)
}
