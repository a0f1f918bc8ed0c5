use crate::error::ensure_dim;
use crate::Result;

/// Generalized advantage estimates for a `steps × n_envs` rollout stored
/// step-major (`index = step * n_envs + env`).
///
/// `next_values[i]` is the value of the state reached by transition `i`
/// (before any automatic reset). `terminal` cuts the bootstrap; `done` cuts
/// the recursion across episode boundaries. Returns `(advantages, returns)`
/// with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    done: &[bool],
    terminal: &[bool],
    n_envs: usize,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    ensure_dim!(values.len(), n, "values");
    ensure_dim!(next_values.len(), n, "next values");
    ensure_dim!(done.len(), n, "done flags");
    ensure_dim!(terminal.len(), n, "terminal flags");
    ensure_dim!(n % n_envs.max(1), 0, "rollout length remainder");
    let steps = n / n_envs;
    let mut adv = vec![0.0; n];
    for e in 0..n_envs {
        let mut next_adv = 0.0;
        for t in (0..steps).rev() {
            let i = t * n_envs + e;
            let boot = if terminal[i] { 0.0 } else { gamma * next_values[i] };
            let delta = rewards[i] + boot - values[i];
            let carry = if done[i] || t + 1 == steps { 0.0 } else { gamma * lambda * next_adv };
            adv[i] = delta + carry;
            next_adv = adv[i];
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to zero mean and unit variance (left centered when the
/// spread is zero).
pub fn normalize(x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in x.iter_mut() {
        *v = if std > 1e-12 { (*v - mean) / std } else { *v - mean };
    }
}
