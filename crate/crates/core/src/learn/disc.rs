use rand::seq::SliceRandom;
use rand::Rng;

use super::{gather, minibatches};
use crate::error::ensure_dim;
use crate::nn::{clip_grad_norm, Adam, Mlp};
use crate::{Error, Result};

/// Discriminator outputs are clamped to `[D_CLAMP, 1 - D_CLAMP]` inside logarithms.
pub const D_CLAMP: f64 = 1e-4;

fn clamp_d(d: f64) -> f64 {
    d.clamp(D_CLAMP, 1.0 - D_CLAMP)
}

/// Tracking reward `-ln(1 - D)`, positive and increasing in `D`.
pub fn reward_from_discriminator(d: f64) -> f64 {
    -(1.0 - clamp_d(d)).ln()
}

pub fn discriminator_rewards(disc: &Mlp, deltas: &[f64], n: usize) -> Result<Vec<f64>> {
    Ok(disc.forward_batch(deltas, n)?.into_iter().map(reward_from_discriminator).collect())
}

/// `-ln D(0) - mean ln(1 - D(Δ)) + λ mean ‖∇_Δ D(Δ)‖²`.
///
/// When `grads` is given, the parameter gradient of the loss is added to it.
pub fn discriminator_loss(disc: &Mlp, deltas: &[f64], n: usize, lambda: f64, grads: Option<&mut [f64]>) -> Result<f64> {
    let dim = disc.n_in();
    ensure_dim!(deltas.len(), n * dim, "tracking-error batch");
    if n == 0 {
        return Err(Error::Contract("discriminator needs at least one sample".into()));
    }
    let zero = vec![0.0; dim];
    let t0 = disc.forward_tape(&zero, 1)?;
    let tn = disc.forward_tape(deltas, n)?;
    let d0 = t0.out[0];
    let mut loss = -clamp_d(d0).ln();
    let up0 = if (D_CLAMP..=1.0 - D_CLAMP).contains(&d0) { -1.0 / d0 } else { 0.0 };
    let mut up = vec![0.0; n];
    for (u, &d) in up.iter_mut().zip(&tn.out) {
        loss -= (1.0 - clamp_d(d)).ln() / n as f64;
        if (D_CLAMP..=1.0 - D_CLAMP).contains(&d) {
            *u = 1.0 / ((1.0 - d) * n as f64);
        }
    }
    match grads {
        Some(g) => {
            disc.backward(&t0, &[up0], Some(g))?;
            disc.backward(&tn, &up, Some(g))?;
            if lambda > 0.0 {
                loss += lambda * disc.input_gradient_penalty(deltas, n, lambda, g)?;
            }
        }
        None => {
            if lambda > 0.0 {
                let mut scratch = vec![0.0; disc.n_params()];
                loss += lambda * disc.input_gradient_penalty(deltas, n, 0.0, &mut scratch)?;
            }
        }
    }
    Ok(loss)
}

/// Minibatch Adam steps on the discriminator loss; returns the mean loss.
#[allow(clippy::too_many_arguments)]
pub fn train_discriminator(
    disc: &mut Mlp,
    opt: &mut Adam,
    deltas: &[f64],
    n: usize,
    lambda: f64,
    epochs: usize,
    n_minibatches: usize,
    max_grad_norm: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let dim = disc.n_in();
    ensure_dim!(deltas.len(), n * dim, "tracking-error batch");
    let mut perm: Vec<usize> = (0..n).collect();
    let (mut total, mut count) = (0.0, 0usize);
    for _ in 0..epochs {
        perm.shuffle(rng);
        for idx in minibatches(&perm, n_minibatches) {
            let x = gather(deltas, dim, idx);
            let mut g = vec![0.0; disc.n_params()];
            let loss = discriminator_loss(disc, &x, idx.len(), lambda, Some(&mut g))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss("discriminator"));
            }
            clip_grad_norm(&mut g, max_grad_norm);
            opt.update(disc.params_mut(), &g)?;
            total += loss;
            count += 1;
        }
    }
    Ok(total / count.max(1) as f64)
}
