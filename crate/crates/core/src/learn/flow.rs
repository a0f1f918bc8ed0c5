use rand::seq::SliceRandom;
use rand::Rng;

use super::policy::{time_features, TIME_FEATURES};
use super::{gather, minibatches};
use crate::error::ensure_dim;
use crate::nn::{clip_grad_norm, Adam, Mlp};
use crate::{Error, Result};

/// A state-action value with an action gradient, evaluated on row-major batches.
pub trait ActionValue {
    /// `(Q(s_b, a_b), ∂Q/∂a_b)` for every row `b`.
    fn value_and_action_grad(&self, obs: &[f64], act: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)>;

    fn values(&self, obs: &[f64], act: &[f64], n: usize) -> Result<Vec<f64>> {
        Ok(self.value_and_action_grad(obs, act, n)?.0)
    }
}

/// Row-wise concatenation `[obs, act]`.
pub fn q_input(obs: &[f64], act: &[f64], n: usize) -> Result<Vec<f64>> {
    ensure_dim!(obs.len() % n.max(1), 0, "observation batch remainder");
    ensure_dim!(act.len() % n.max(1), 0, "action batch remainder");
    let (no, na) = (obs.len() / n.max(1), act.len() / n.max(1));
    let mut x = Vec::with_capacity(n * (no + na));
    for b in 0..n {
        x.extend_from_slice(&obs[b * no..(b + 1) * no]);
        x.extend_from_slice(&act[b * na..(b + 1) * na]);
    }
    Ok(x)
}

impl ActionValue for Mlp {
    fn value_and_action_grad(&self, obs: &[f64], act: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = q_input(obs, act, n)?;
        ensure_dim!(x.len(), n * self.n_in(), "value network input");
        let tape = self.forward_tape(&x, n)?;
        let dx = self.backward(&tape, &vec![1.0; n], None)?;
        let (width, na) = (self.n_in(), act.len() / n.max(1));
        let mut ga = Vec::with_capacity(n * na);
        for b in 0..n {
            ga.extend_from_slice(&dx[b * width + width - na..(b + 1) * width]);
        }
        Ok((tape.out, ga))
    }
}

/// Mean squared error of `q` against `targets`.
pub fn q_loss(q: &impl ActionValue, obs: &[f64], act: &[f64], targets: &[f64]) -> Result<f64> {
    let n = targets.len();
    let v = q.values(obs, act, n)?;
    Ok(v.iter().zip(targets).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n.max(1) as f64)
}

/// Minibatch regression of `q(s, a)` onto `targets`; returns the mean
/// minibatch loss over all updates.
#[allow(clippy::too_many_arguments)]
pub fn fit_q(
    q: &mut Mlp,
    opt: &mut Adam,
    obs: &[f64],
    act: &[f64],
    targets: &[f64],
    epochs: usize,
    n_minibatches: usize,
    max_grad_norm: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let n = targets.len();
    let x = q_input(obs, act, n)?;
    let width = q.n_in();
    ensure_dim!(x.len(), n * width, "value network input");
    let mut perm: Vec<usize> = (0..n).collect();
    let (mut total, mut count) = (0.0, 0usize);
    for _ in 0..epochs {
        perm.shuffle(rng);
        for idx in minibatches(&perm, n_minibatches) {
            let m = idx.len();
            let xb = gather(&x, width, idx);
            let tape = q.forward_tape(&xb, m)?;
            let mut loss = 0.0;
            let up: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(r, &i)| {
                    let d = tape.out[r] - targets[i];
                    loss += d * d / m as f64;
                    2.0 * d / m as f64
                })
                .collect();
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss("value-of-action regression"));
            }
            let mut g = vec![0.0; q.n_params()];
            q.backward(&tape, &up, Some(&mut g))?;
            clip_grad_norm(&mut g, max_grad_norm);
            opt.update(q.params_mut(), &g)?;
            total += loss;
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}

/// Supervision points for the flow field, one per ascent step per sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowPairs {
    pub act_dim: usize,
    /// Flow time of each pair.
    pub t: Vec<f64>,
    /// Observation row each pair belongs to.
    pub obs_index: Vec<usize>,
    /// Action on the ascent path, row-major.
    pub a: Vec<f64>,
    /// Target velocity, row-major.
    pub v: Vec<f64>,
    /// Ascent endpoints, one row per input sample.
    pub endpoints: Vec<f64>,
    /// Samples dropped because a gradient was not finite.
    pub dropped: usize,
    /// Kept samples whose endpoint value fell below the starting value.
    pub not_improved: usize,
}

impl FlowPairs {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Gradient ascent on `q` from each `a0` row: `a_{k+1} = a_k + eta ∇_a Q(s, a_k)`,
/// emitting `(k / steps, s, a_k) → ∇_a Q(s, a_k)` for `k < steps`.
pub fn build_flow_targets(
    q: &impl ActionValue,
    obs: &[f64],
    a0: &[f64],
    n: usize,
    steps: usize,
    eta: f64,
) -> Result<FlowPairs> {
    ensure_dim!(a0.len() % n.max(1), 0, "action batch remainder");
    let na = a0.len() / n.max(1);
    let mut path = vec![a0.to_vec()];
    let mut grads = Vec::with_capacity(steps);
    let mut start_q = Vec::new();
    let mut ok = vec![true; n];
    for k in 0..steps {
        let (val, g) = q.value_and_action_grad(obs, &path[k], n)?;
        if k == 0 {
            start_q = val;
        }
        for b in 0..n {
            if g[b * na..(b + 1) * na].iter().any(|v| !v.is_finite()) {
                ok[b] = false;
            }
        }
        let next: Vec<f64> = path[k].iter().zip(&g).map(|(a, gi)| a + eta * gi).collect();
        grads.push(g);
        path.push(next);
    }
    let end_q = q.values(obs, &path[steps], n)?;

    let mut out = FlowPairs { act_dim: na, endpoints: path[steps].clone(), ..FlowPairs::default() };
    for b in 0..n {
        if !ok[b] || !end_q[b].is_finite() {
            out.dropped += 1;
            continue;
        }
        if end_q[b] < start_q[b] {
            out.not_improved += 1;
        }
        for k in 0..steps {
            out.t.push(k as f64 / steps as f64);
            out.obs_index.push(b);
            out.a.extend_from_slice(&path[k][b * na..(b + 1) * na]);
            out.v.extend_from_slice(&grads[k][b * na..(b + 1) * na]);
        }
    }
    Ok(out)
}

/// Flow-field input rows `[time features, obs, a]` for the given pairs.
pub fn flow_input(pairs: &FlowPairs, obs: &[f64], obs_dim: usize, idx: &[usize]) -> Vec<f64> {
    let na = pairs.act_dim;
    let mut x = Vec::with_capacity(idx.len() * (TIME_FEATURES + obs_dim + na));
    for &i in idx {
        x.extend_from_slice(&time_features(pairs.t[i]));
        let o = pairs.obs_index[i];
        x.extend_from_slice(&obs[o * obs_dim..(o + 1) * obs_dim]);
        x.extend_from_slice(&pairs.a[i * na..(i + 1) * na]);
    }
    x
}

/// Mean squared velocity error over all pairs and action dimensions.
pub fn flow_loss(flow: &Mlp, pairs: &FlowPairs, obs: &[f64]) -> Result<f64> {
    let obs_dim = flow.n_in() - TIME_FEATURES - pairs.act_dim;
    let idx: Vec<usize> = (0..pairs.len()).collect();
    let x = flow_input(pairs, obs, obs_dim, &idx);
    let y = flow.forward_batch(&x, idx.len())?;
    Ok(y.iter().zip(&pairs.v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len().max(1) as f64)
}

/// Flow matching: minibatch regression of the field onto the target velocities.
pub fn train_flow(
    flow: &mut Mlp,
    opt: &mut Adam,
    pairs: &FlowPairs,
    obs: &[f64],
    epochs: usize,
    n_minibatches: usize,
    max_grad_norm: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Contract("flow training needs at least one pair".into()));
    }
    let na = pairs.act_dim;
    let obs_dim = flow.n_in() - TIME_FEATURES - na;
    let mut perm: Vec<usize> = (0..pairs.len()).collect();
    let (mut total, mut count) = (0.0, 0usize);
    for _ in 0..epochs {
        perm.shuffle(rng);
        for idx in minibatches(&perm, n_minibatches) {
            let m = idx.len();
            let x = flow_input(pairs, obs, obs_dim, idx);
            let tape = flow.forward_tape(&x, m)?;
            let scale = 1.0 / (m * na) as f64;
            let mut loss = 0.0;
            let mut up = vec![0.0; m * na];
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..na {
                    let d = tape.out[r * na + j] - pairs.v[i * na + j];
                    loss += d * d * scale;
                    up[r * na + j] = 2.0 * d * scale;
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss("flow matching"));
            }
            let mut g = vec![0.0; flow.n_params()];
            flow.backward(&tape, &up, Some(&mut g))?;
            clip_grad_norm(&mut g, max_grad_norm);
            opt.update(flow.params_mut(), &g)?;
            total += loss;
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}
