use super::kinematics::fk_unchecked;
use super::{ContactParams, Kinematics, ModelSpec};
use crate::error::ensure_dim;
use crate::Result;

/// Generalized contact force plus the world-frame force on each sphere.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactReport {
    pub generalized: Vec<f64>,
    /// `(tangential x, normal z)` force on each sphere, N.
    pub sphere_forces: Vec<[f64; 2]>,
}

/// Compliant penalty contact against the ground plane `z = 0`.
///
/// Normal force is `max(0, k·δ + c·δ̇)` with penetration `δ` of the sphere's
/// lowest point, so it is never adhesive. Friction is `-μ·N·tanh(v_t / v_s)`.
pub fn contact_forces(spec: &ModelSpec, q: &[f64], dq: &[f64], params: &ContactParams) -> Result<ContactReport> {
    ensure_dim!(q.len(), spec.n_q(), "generalized coordinates");
    ensure_dim!(dq.len(), spec.n_q(), "generalized velocities");
    let kin = fk_unchecked(spec, q);
    let mut report = ContactReport { generalized: vec![0.0; spec.n_q()], sphere_forces: Vec::new() };
    accumulate_contact(spec, &kin, dq, params, &mut report);
    Ok(report)
}

pub(crate) fn accumulate_contact(
    spec: &ModelSpec,
    kin: &Kinematics,
    dq: &[f64],
    params: &ContactParams,
    report: &mut ContactReport,
) {
    report.generalized.iter_mut().for_each(|v| *v = 0.0);
    report.sphere_forces.clear();
    for s in &spec.contacts {
        let center = kin.point(s.link, s.offset);
        let bottom = [center[0], center[1] - s.radius];
        let depth = -bottom[1];
        if depth <= 0.0 {
            report.sphere_forces.push([0.0, 0.0]);
            continue;
        }
        let mut v = [0.0; 2];
        kin.for_each_jacobian_column(spec, s.link, bottom, |k, c| {
            v[0] += c[0] * dq[k];
            v[1] += c[1] * dq[k];
        });
        let normal = (params.stiffness * depth - params.damping * v[1]).max(0.0);
        let tangential = -params.friction * normal * (v[0] / params.smoothing_velocity).tanh();
        let f = [tangential, normal];
        kin.for_each_jacobian_column(spec, s.link, bottom, |k, c| {
            report.generalized[k] += c[0] * f[0] + c[1] * f[1];
        });
        report.sphere_forces.push(f);
    }
}
