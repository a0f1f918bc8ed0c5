use nalgebra::{DMatrix, DVector};

use super::contact::accumulate_contact;
use super::dynamics::{accumulate_bias, accumulate_mass_matrix};
use super::kinematics::{fk_unchecked, mtu_length_and_gradient, path_length};
use super::{ContactParams, ContactReport, ModelSpec};
use crate::error::ensure_dim;
use crate::muscle::{self, MuscleState};
use crate::{Error, Result, DT_SIM, SUBSTEPS};

/// Smallest normalized fiber length fed to the force curves.
const MIN_FIBER_LENGTH: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub muscles: Vec<MuscleState>,
    pub t: f64,
}

impl SimState {
    /// State at `(q, dq)` with every muscle at activation `act` and fiber
    /// lengths consistent with the configuration.
    pub fn new(spec: &ModelSpec, q: Vec<f64>, dq: Vec<f64>, act: f64) -> Result<Self> {
        ensure_dim!(q.len(), spec.n_q(), "generalized coordinates");
        ensure_dim!(dq.len(), spec.n_q(), "generalized velocities");
        let kin = fk_unchecked(spec, &q);
        let muscles = spec
            .muscles
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let l_m = p.fiber_length(path_length(spec, &kin, i));
                let f_m = muscle::mtu_force(act, l_m.max(MIN_FIBER_LENGTH), 0.0, p).unwrap_or(0.0);
                MuscleState { act, l_m, v_m: 0.0, f_m }
            })
            .collect();
        Ok(SimState { q, dq, muscles, t: 0.0 })
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        Self::new(spec, vec![0.0; spec.n_q()], vec![0.0; spec.n_q()], 0.0).expect("dimensions match")
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.dq).all(|v| v.is_finite())
            && self.muscles.iter().all(|m| m.act.is_finite() && m.l_m.is_finite() && m.f_m.is_finite())
    }
}

/// Per-control-step diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    /// Sphere forces `(x, z)` averaged over the substeps, N.
    pub sphere_forces: Vec<[f64; 2]>,
    /// Smallest normal force seen on any sphere during the step.
    pub min_normal: f64,
}

/// Advances one control step (10 substeps of 2 ms).
///
/// Each substep updates activations, recomputes fiber length and velocity
/// (finite difference of the path length across the substep), evaluates
/// muscle forces, solves `M ddq = J_m^T F + tau_ext + tau_limit - C` and
/// integrates with semi-implicit Euler.
pub fn step(state: &SimState, u: &[f64], spec: &ModelSpec, contact: &ContactParams) -> Result<(SimState, StepReport)> {
    let n = spec.n_q();
    let nm = spec.n_muscles();
    ensure_dim!(u.len(), nm, "excitation vector");
    ensure_dim!(state.q.len(), n, "generalized coordinates");
    ensure_dim!(state.dq.len(), n, "generalized velocities");
    ensure_dim!(state.muscles.len(), nm, "muscle states");
    if let Some(bad) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("excitation {bad} outside [0, 1]")));
    }

    let mut next = state.clone();
    let mut mass = DMatrix::zeros(n, n);
    let mut bias = vec![0.0; n];
    let mut rhs = DVector::zeros(n);
    let mut grad = vec![0.0; n];
    let mut contact_report = ContactReport { generalized: vec![0.0; n], sphere_forces: Vec::new() };
    let mut report = StepReport {
        sphere_forces: vec![[0.0; 2]; spec.contacts.len()],
        min_normal: f64::INFINITY,
    };
    let r = spec.root_dofs();

    for sub in 0..SUBSTEPS {
        let kin = fk_unchecked(spec, &next.q);
        rhs.fill(0.0);
        for (i, p) in spec.muscles.iter().enumerate() {
            let m = &mut next.muscles[i];
            m.act = muscle::activation_step(m.act, u[i], DT_SIM, p.tau_act, p.tau_deact)?;
            let length = mtu_length_and_gradient(spec, &kin, i, &mut grad);
            let l_m = p.fiber_length(length);
            let prev_length = m.l_m * p.l_opt + p.l_slack;
            m.v_m = p.fiber_velocity((length - prev_length) / DT_SIM);
            m.l_m = l_m;
            m.f_m = muscle::mtu_force(m.act, l_m.max(MIN_FIBER_LENGTH), m.v_m, p)?;
            for k in 0..n {
                rhs[k] -= grad[k] * m.f_m;
            }
        }
        accumulate_contact(spec, &kin, &next.dq, contact, &mut contact_report);
        for k in 0..n {
            rhs[k] += contact_report.generalized[k];
        }
        for (acc, f) in report.sphere_forces.iter_mut().zip(&contact_report.sphere_forces) {
            acc[0] += f[0] / SUBSTEPS as f64;
            acc[1] += f[1] / SUBSTEPS as f64;
            report.min_normal = report.min_normal.min(f[1]);
        }
        for (k, j) in spec.joints.iter().enumerate() {
            if let Some([lo, hi]) = j.limits {
                let (x, v) = (next.q[r + k], next.dq[r + k]);
                if x > hi {
                    rhs[r + k] -= spec.limit_stiffness * (x - hi) + spec.limit_damping * v.max(0.0);
                } else if x < lo {
                    rhs[r + k] += spec.limit_stiffness * (lo - x) - spec.limit_damping * v.min(0.0);
                }
            }
        }
        accumulate_bias(spec, &kin, &next.dq, &mut bias);
        for k in 0..n {
            rhs[k] -= bias[k];
        }
        accumulate_mass_matrix(spec, &kin, &mut mass);
        let ddq = match mass.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => return Err(Error::Diverged { substep: sub }),
        };
        for k in 0..n {
            next.dq[k] += ddq[k] * DT_SIM;
            next.q[k] += next.dq[k] * DT_SIM;
        }
        if !next.is_finite() {
            return Err(Error::Diverged { substep: sub });
        }
    }
    if spec.contacts.is_empty() {
        report.min_normal = 0.0;
    }
    next.t = state.t + crate::DT_CTRL;
    Ok((next, report))
}
