use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MarkerTrajectory;
use crate::skeleton::{forward_kinematics, ModelSpec};
use crate::{Error, Result};

const DAMPING_FLOOR: f64 = 1e-6;
const DAMPING_CEIL: f64 = 1e12;
const FIRST_FRAME_ROUNDS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkConfig {
    /// Weight of the pull towards the previous frame's solution.
    pub lambda_q: f64,
    /// Initial least-squares damping.
    pub damping: f64,
    pub max_iters: usize,
    /// Stop once the largest coordinate update falls below this.
    pub tol: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig { lambda_q: 1e-3, damping: 1e-3, max_iters: 100, tol: 1e-10 }
    }
}

impl IkConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [("lambda_q", self.lambda_q), ("damping", self.damping), ("tol", self.tol)];
        for (name, v) in vals {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("ik.{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Config("ik.max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every accepted iterate, starting at `q_prev`.
    pub trace: Vec<f64>,
}

/// Weighted squared marker error plus the temporal regularizer.
pub fn ik_objective(spec: &ModelSpec, q: &[f64], q_prev: &[f64], targets: &[[f64; 2]], lambda_q: f64) -> Result<f64> {
    let kin = forward_kinematics(spec, q)?;
    let mut f = 0.0;
    for (m, t) in spec.markers.iter().zip(targets) {
        let p = kin.point(m.link, m.offset);
        f += m.weight * ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2));
    }
    f += lambda_q * q.iter().zip(q_prev).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    Ok(f)
}

/// Gauss-Newton normal equations `(JᵀWJ + λI, JᵀWr + λ(q - q_prev))`.
fn linearize(
    spec: &ModelSpec,
    q: &[f64],
    q_prev: &[f64],
    targets: &[[f64; 2]],
    lambda_q: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = q.len();
    let kin = forward_kinematics(spec, q)?;
    let mut h = DMatrix::<f64>::identity(n, n) * lambda_q;
    let mut g = DVector::from_iterator(n, q.iter().zip(q_prev).map(|(a, b)| lambda_q * (a - b)));
    for (m, t) in spec.markers.iter().zip(targets) {
        let p = kin.point(m.link, m.offset);
        let r = [p[0] - t[0], p[1] - t[1]];
        let jac = kin.point_jacobian(spec, m.link, p);
        for i in 0..n {
            let ji = jac[i];
            if ji == [0.0, 0.0] {
                continue;
            }
            g[i] += m.weight * (ji[0] * r[0] + ji[1] * r[1]);
            for k in 0..n {
                let jk = jac[k];
                h[(i, k)] += m.weight * (ji[0] * jk[0] + ji[1] * jk[1]);
            }
        }
    }
    Ok((h, g))
}

/// Damped Gauss-Newton solve of one frame, started at `q_prev`.
///
/// Damping grows tenfold whenever a trial step raises the objective and
/// halves after every accepted step, so the objective never increases.
pub fn ik_solve_frame(spec: &ModelSpec, targets: &[[f64; 2]], q_prev: &[f64], cfg: &IkConfig) -> Result<IkSolution> {
    cfg.validate()?;
    if targets.len() != spec.markers.len() {
        return Err(Error::Contract(format!(
            "{} marker targets for {} model markers",
            targets.len(),
            spec.markers.len()
        )));
    }
    if targets.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite marker target".into()));
    }
    if q_prev.len() != spec.n_q() || q_prev.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract(format!("q_prev must hold {} finite coordinates", spec.n_q())));
    }
    let n = q_prev.len();
    let mut q = q_prev.to_vec();
    let mut f = ik_objective(spec, &q, q_prev, targets, cfg.lambda_q)?;
    let mut trace = vec![f];
    let mut mu = cfg.damping.max(DAMPING_FLOOR);
    let mut iterations = 0;
    'outer: while iterations < cfg.max_iters {
        iterations += 1;
        let (h, g) = linearize(spec, &q, q_prev, targets, cfg.lambda_q)?;
        loop {
            let a = &h + DMatrix::<f64>::identity(n, n) * mu;
            let Some(step) = a.cholesky().map(|c| c.solve(&-&g)) else {
                mu *= 10.0;
                if mu > DAMPING_CEIL {
                    break 'outer;
                }
                continue;
            };
            let trial: Vec<f64> = q.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let f_trial = ik_objective(spec, &trial, q_prev, targets, cfg.lambda_q)?;
            if f_trial.is_finite() && f_trial <= f {
                q = trial;
                f = f_trial;
                trace.push(f);
                mu = (mu / 2.0).max(DAMPING_FLOOR);
                if step.amax() < cfg.tol {
                    break 'outer;
                }
                break;
            }
            mu *= 10.0;
            if mu > DAMPING_CEIL {
                break 'outer;
            }
        }
    }
    Ok(IkSolution { q, objective: f, iterations, trace })
}

/// Initial guess for the first frame: zero joint angles, with a floating root
/// translated so the marker centroid matches the first frame's.
pub fn initial_guess(spec: &ModelSpec, targets: &[[f64; 2]]) -> Result<Vec<f64>> {
    let mut q = vec![0.0; spec.n_q()];
    if spec.is_floating() && !targets.is_empty() {
        let kin = forward_kinematics(spec, &q)?;
        let n = targets.len() as f64;
        for d in 0..2 {
            let model: f64 = spec.markers.iter().map(|m| kin.point(m.link, m.offset)[d]).sum::<f64>() / n;
            let data: f64 = targets.iter().map(|t| t[d]).sum::<f64>() / n;
            q[d] = data - model;
        }
    }
    Ok(q)
}

/// Solves every frame in order, each warm-started from the previous solution.
pub fn ik_solve_sequence(spec: &ModelSpec, traj: &MarkerTrajectory, cfg: &IkConfig) -> Result<Vec<IkSolution>> {
    traj.validate()?;
    if traj.is_empty() {
        return Err(Error::Contract("marker trajectory has no frames".into()));
    }
    let cols = traj.columns_for(spec)?;
    let first = traj.targets(&cols, 0);
    let wrap0 = |e| Error::Ik { frame: 0, source: Box::new(e) };
    let mut q_prev = initial_guess(spec, &first).map_err(wrap0)?;
    // The first frame has no predecessor; re-anchor until the regularizer stops pulling.
    for _ in 0..FIRST_FRAME_ROUNDS {
        let sol = ik_solve_frame(spec, &first, &q_prev, cfg).map_err(wrap0)?;
        let moved = sol.q.iter().zip(&q_prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q_prev = sol.q;
        if moved < cfg.tol {
            break;
        }
    }
    let mut out = Vec::with_capacity(traj.len());
    for t in 0..traj.len() {
        let targets = traj.targets(&cols, t);
        let sol =
            ik_solve_frame(spec, &targets, &q_prev, cfg).map_err(|e| Error::Ik { frame: t, source: Box::new(e) })?;
        q_prev.clone_from(&sol.q);
        out.push(sol);
    }
    Ok(out)
}
