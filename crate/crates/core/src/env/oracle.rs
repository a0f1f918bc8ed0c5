use serde::{Deserialize, Serialize};

use super::ReferenceTrajectory;
use crate::muscle;
use crate::skeleton::{bias_forces, forward_kinematics, mass_matrix, mtu_length_and_gradient, ModelSpec, SimState};
use crate::{Error, Result, DT_CTRL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleGains {
    /// Position gain, 1/s².
    pub kp: f64,
    /// Velocity gain, 1/s.
    pub kd: f64,
    /// Activation regularization weight, (N m)².
    pub reg: f64,
    pub sweeps: usize,
}

impl Default for OracleGains {
    fn default() -> Self {
        OracleGains { kp: 400.0, kd: 40.0, reg: 1e-2, sweeps: 60 }
    }
}

/// Scripted tracking controller for fixed-base models: computed-torque
/// feedback on the reference, a box-constrained least-squares split of the
/// torque over muscles, and inversion of the activation lag.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleController {
    pub gains: OracleGains,
    /// Per-muscle activation cost multipliers.
    pub weights: Vec<f64>,
}

impl OracleController {
    pub fn new(spec: &ModelSpec, gains: OracleGains) -> Result<Self> {
        Self::with_weights(spec, gains, vec![1.0; spec.n_muscles()])
    }

    pub fn with_weights(spec: &ModelSpec, gains: OracleGains, weights: Vec<f64>) -> Result<Self> {
        if spec.is_floating() {
            return Err(Error::Contract("the oracle controller needs a fixed-base model".into()));
        }
        if weights.len() != spec.n_muscles() || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("oracle weights must be positive, one per muscle".into()));
        }
        Ok(OracleController { gains, weights })
    }

    /// Activations that best produce the feedback torque toward frame `t_index + 1`.
    pub fn target_activation(
        &self,
        spec: &ModelSpec,
        state: &SimState,
        reference: &ReferenceTrajectory,
        t_index: usize,
    ) -> Result<Vec<f64>> {
        let next = (t_index + 1).min(reference.len() - 1);
        let n = spec.n_q();
        let nm = spec.n_muscles();
        let g = &self.gains;
        let ff: Vec<f64> = (0..n).map(|k| (reference.dq[next][k] - reference.dq[t_index][k]) / reference.dt).collect();
        let qdd: Vec<f64> = (0..n)
            .map(|k| {
                ff[k] + g.kp * (reference.q[next][k] - state.q[k]) + g.kd * (reference.dq[next][k] - state.dq[k])
            })
            .collect();
        let m = mass_matrix(spec, &state.q)?;
        let bias = bias_forces(spec, &state.q, &state.dq)?;
        let tau: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[(i, j)] * qdd[j]).sum::<f64>() + bias[i]).collect();

        // Generalized force is linear in activation: col_i * a_i + passive_i.
        let kin = forward_kinematics(spec, &state.q)?;
        let mut grad = vec![0.0; n];
        let mut cols = vec![vec![0.0; n]; nm];
        let mut b = tau.clone();
        for (i, p) in spec.muscles.iter().enumerate() {
            let length = mtu_length_and_gradient(spec, &kin, i, &mut grad);
            let l_m = p.fiber_length(length).max(0.05);
            let rate: f64 = grad.iter().zip(&state.dq).map(|(g, v)| g * v).sum();
            let v_m = p.fiber_velocity(rate);
            let passive = muscle::mtu_force(0.0, l_m, v_m, p)?;
            let full = muscle::mtu_force(1.0, l_m, v_m, p)?;
            for k in 0..n {
                cols[i][k] = -grad[k] * (full - passive);
                b[k] += grad[k] * passive;
            }
        }
        let h = |i: usize, j: usize| cols[i].iter().zip(&cols[j]).map(|(x, y)| x * y).sum::<f64>();
        let mut hess = vec![vec![0.0; nm]; nm];
        for i in 0..nm {
            for j in 0..nm {
                hess[i][j] = h(i, j);
            }
            hess[i][i] += g.reg * self.weights[i];
        }
        let lin: Vec<f64> = cols.iter().map(|c| c.iter().zip(&b).map(|(x, y)| x * y).sum()).collect();
        let mut a: Vec<f64> = state.muscles.iter().map(|m| m.act).collect();
        for _ in 0..g.sweeps {
            for i in 0..nm {
                let off: f64 = (0..nm).filter(|&j| j != i).map(|j| hess[i][j] * a[j]).sum();
                a[i] = ((lin[i] - off) / hess[i][i]).clamp(0.0, 1.0);
            }
        }
        Ok(a)
    }

    /// Excitations that move the current activations onto the target over one
    /// control step, clipped to `[0, 1]`.
    pub fn excitation(
        &self,
        spec: &ModelSpec,
        state: &SimState,
        reference: &ReferenceTrajectory,
        t_index: usize,
    ) -> Result<Vec<f64>> {
        let target = self.target_activation(spec, state, reference, t_index)?;
        Ok(state
            .muscles
            .iter()
            .zip(&spec.muscles)
            .zip(&target)
            .map(|((m, p), &goal)| {
                let up = goal > m.act;
                let tau = muscle::activation_time_constant(m.act, if up { 1.0 } else { 0.0 }, p.tau_act, p.tau_deact);
                let decay = (-DT_CTRL / tau).exp();
                ((goal - m.act * decay) / (1.0 - decay)).clamp(0.0, 1.0)
            })
            .collect())
    }
}
