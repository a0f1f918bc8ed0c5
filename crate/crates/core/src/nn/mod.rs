//! Small fully connected networks with hand-written reverse-mode gradients.
//!
//! Every network maps a row-major batch `B × n_in` to `B × n_out` through
//! tanh hidden layers and a configurable output head. Parameters live in one
//! flat vector laid out layer by layer as `W (n_out × n_in, row-major)`
//! followed by `b (n_out)`.

mod adam;
mod checkpoint;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{Checkpoint, Tensor, CHECKPOINT_VERSION};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ensure_dim;
use crate::{Error, Result};

/// Output transformation applied after the last linear layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    Linear,
    Sigmoid,
    /// `scale ⊙ y + shift`, one pair per output dimension.
    Affine { scale: Vec<f64>, shift: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
    head: Head,
}

/// Activations recorded by a batched forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub batch: usize,
    /// `acts[0]` is the input, `acts[l]` the tanh output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-head output of the last layer.
    raw: Vec<f64>,
    /// Head output.
    pub out: Vec<f64>,
}

/// `c = alpha · op(a) · op(b) + beta · c` on row-major buffers, where `op(a)`
/// is `m × k` and `op(b)` is `k × n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn add_bias(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_mut(bias.len()) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn accumulate_column_sums(rows: &[f64], width: usize, out: &mut [f64]) {
    for row in rows.chunks(width) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    /// Fan-in scaled uniform initialization (`U(±sqrt(3 / fan_in))`) with zero
    /// biases; the final layer's weights are multiplied by `final_scale`.
    pub fn new(widths: &[usize], head: Head, final_scale: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(widths, head)?;
        let layers = net.layers();
        for l in 0..layers {
            let (w, _, n_in, n_out) = net.layer(l);
            let bound = (3.0 / n_in as f64).sqrt();
            let scale = if l + 1 == layers { final_scale } else { 1.0 };
            for p in &mut net.params[w..w + n_in * n_out] {
                *p = scale * rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(widths: &[usize], head: Head) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        if let Head::Affine { scale, shift } = &head {
            let n = *widths.last().unwrap();
            ensure_dim!(scale.len(), n, "affine head scale");
            ensure_dim!(shift.len(), n, "affine head shift");
        }
        let count = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp { widths: widths.to_vec(), params: vec![0.0; count], head })
    }

    /// Builds a network from an existing flat parameter vector.
    pub fn from_params(widths: &[usize], head: Head, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(widths, head)?;
        ensure_dim!(params.len(), net.params.len(), "parameter count");
        net.params = params;
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn n_in(&self) -> usize {
        self.widths[0]
    }

    pub fn n_out(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `(weight offset, bias offset, n_in, n_out)` of layer `l`.
    fn layer(&self, l: usize) -> (usize, usize, usize, usize) {
        let mut off = 0;
        for w in self.widths.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
        (off, off + n_in * n_out, n_in, n_out)
    }

    fn weights(&self, l: usize) -> &[f64] {
        let (w, b, _, _) = self.layer(l);
        &self.params[w..b]
    }

    fn apply_head(&self, raw: &[f64]) -> Vec<f64> {
        match &self.head {
            Head::Linear => raw.to_vec(),
            Head::Sigmoid => raw.iter().map(|&y| sigmoid(y)).collect(),
            Head::Affine { scale, shift } => raw
                .chunks(scale.len())
                .flat_map(|row| row.iter().zip(scale).zip(shift).map(|((y, a), b)| a * y + b))
                .collect(),
        }
    }

    /// Derivative of the head output with respect to the raw output.
    fn head_slope(&self, raw: &[f64], out: &[f64]) -> Vec<f64> {
        match &self.head {
            Head::Linear => vec![1.0; raw.len()],
            Head::Sigmoid => out.iter().map(|d| d * (1.0 - d)).collect(),
            Head::Affine { scale, .. } => {
                (0..raw.len()).map(|i| scale[i % scale.len()]).collect()
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(x, 1)
    }

    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward_tape(x, batch)?.out)
    }

    pub fn forward_tape(&self, x: &[f64], batch: usize) -> Result<Tape> {
        ensure_dim!(x.len(), batch * self.n_in(), "network input");
        let layers = self.layers();
        let mut acts = Vec::with_capacity(layers);
        acts.push(x.to_vec());
        let mut raw = Vec::new();
        for l in 0..layers {
            let (w, b, n_in, n_out) = self.layer(l);
            let mut z = vec![0.0; batch * n_out];
            gemm(batch, n_in, n_out, 1.0, &acts[l], false, &self.params[w..b], true, 0.0, &mut z);
            add_bias(&mut z, &self.params[b..b + n_out]);
            if l + 1 == layers {
                raw = z;
            } else {
                z.iter_mut().for_each(|v| *v = v.tanh());
                acts.push(z);
            }
        }
        let out = self.apply_head(&raw);
        Ok(Tape { batch, acts, raw, out })
    }

    /// Reverse pass for the scalar `sum(out ⊙ upstream)`.
    ///
    /// Parameter gradients are *added* to `grads` when given; the input
    /// gradient (`B × n_in`) is returned.
    pub fn backward(&self, tape: &Tape, upstream: &[f64], grads: Option<&mut [f64]>) -> Result<Vec<f64>> {
        let batch = tape.batch;
        ensure_dim!(upstream.len(), batch * self.n_out(), "upstream gradient");
        let mut grads = grads;
        if let Some(g) = grads.as_deref() {
            ensure_dim!(g.len(), self.n_params(), "parameter gradient buffer");
        }
        let slope = self.head_slope(&tape.raw, &tape.out);
        let delta: Vec<f64> = upstream.iter().zip(&slope).map(|(u, s)| u * s).collect();
        Ok(self.backpropagate(tape, delta, None, grads.as_deref_mut()))
    }

    /// Shared reverse sweep. `delta` is the gradient at the raw output;
    /// `inject[l]` (for hidden layer `l ≥ 1`) is added to the gradient with
    /// respect to that layer's activation.
    fn backpropagate(
        &self,
        tape: &Tape,
        mut delta: Vec<f64>,
        inject: Option<&[Vec<f64>]>,
        mut grads: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let batch = tape.batch;
        for l in (0..self.layers()).rev() {
            let (w, b, n_in, n_out) = self.layer(l);
            let input = &tape.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                gemm(n_out, batch, n_in, 1.0, &delta, true, input, false, 1.0, &mut g[w..b]);
                accumulate_column_sums(&delta, n_out, &mut g[b..b + n_out]);
            }
            let mut dh = vec![0.0; batch * n_in];
            gemm(batch, n_out, n_in, 1.0, &delta, false, &self.params[w..b], false, 0.0, &mut dh);
            if l == 0 {
                return dh;
            }
            if let Some(inj) = inject {
                for (d, e) in dh.iter_mut().zip(&inj[l]) {
                    *d += e;
                }
            }
            for (d, h) in dh.iter_mut().zip(input) {
                *d *= 1.0 - h * h;
            }
            delta = dh;
        }
        unreachable!("networks have at least one layer")
    }

    /// Convenience: parameter and input gradients of `sum(out ⊙ upstream)`.
    pub fn gradients(&self, x: &[f64], batch: usize, upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let tape = self.forward_tape(x, batch)?;
        let mut g = vec![0.0; self.n_params()];
        let dx = self.backward(&tape, upstream, Some(&mut g))?;
        Ok((g, dx))
    }

    /// Mean squared input-gradient norm `mean_b ‖∂out_b/∂x_b‖²` of a scalar
    /// network, plus `weight ×` its parameter gradient added to `grads`.
    ///
    /// The parameter gradient is obtained by differentiating the reverse
    /// sweep itself (second-order reverse mode).
    pub fn input_gradient_penalty(&self, x: &[f64], batch: usize, weight: f64, grads: &mut [f64]) -> Result<f64> {
        ensure_dim!(self.n_out(), 1, "penalized network output");
        ensure_dim!(grads.len(), self.n_params(), "parameter gradient buffer");
        let tape = self.forward_tape(x, batch)?;
        let layers = self.layers();
        let last = layers - 1;
        let top = self.head_slope(&tape.raw, &tape.out);
        // Forward replay of the input-gradient sweep: r[l] is the gradient
        // with respect to acts[l], s[l] with respect to layer l's pre-activation.
        let mut r: Vec<Vec<f64>> = vec![Vec::new(); layers];
        let mut s: Vec<Vec<f64>> = vec![Vec::new(); layers + 1];
        s[last + 1] = top.clone();
        for l in (0..layers).rev() {
            let (_, _, n_in, n_out) = self.layer(l);
            let mut rl = vec![0.0; batch * n_in];
            gemm(batch, n_out, n_in, 1.0, &s[l + 1], false, self.weights(l), false, 0.0, &mut rl);
            if l > 0 {
                s[l] = rl.iter().zip(&tape.acts[l]).map(|(r, h)| r * (1.0 - h * h)).collect();
            }
            r[l] = rl;
        }
        let g = &r[0];
        let penalty = g.iter().map(|v| v * v).sum::<f64>() / batch as f64;

        // Adjoint sweep through the replay, in forward layer order.
        let mut rbar: Vec<f64> = g.iter().map(|v| 2.0 * weight * v / batch as f64).collect();
        let mut hbar: Vec<Vec<f64>> = vec![Vec::new(); layers];
        for l in 0..layers {
            let (w, b, n_in, n_out) = self.layer(l);
            // r[l] = s[l+1] · W_l
            gemm(n_out, batch, n_in, 1.0, &s[l + 1], true, &rbar, false, 1.0, &mut grads[w..b]);
            let mut sbar = vec![0.0; batch * n_out];
            gemm(batch, n_in, n_out, 1.0, &rbar, false, self.weights(l), true, 0.0, &mut sbar);
            if l == last {
                // s[top] = head slope evaluated at the raw output.
                let ybar: Vec<f64> = match self.head {
                    Head::Sigmoid => sbar
                        .iter()
                        .zip(&tape.out)
                        .map(|(sb, d)| sb * d * (1.0 - d) * (1.0 - 2.0 * d))
                        .collect(),
                    _ => vec![0.0; batch],
                };
                self.backpropagate(&tape, ybar, Some(&hbar), Some(grads));
                break;
            }
            // s[l+1] = r[l+1] ⊙ (1 - h²) with h = acts[l+1]
            let h = &tape.acts[l + 1];
            let rl = &r[l + 1];
            hbar[l + 1] = sbar.iter().zip(rl).zip(h).map(|((sb, r), h)| -2.0 * sb * r * h).collect();
            rbar = sbar.iter().zip(h).map(|(sb, h)| sb * (1.0 - h * h)).collect();
        }
        Ok(penalty)
    }
}
