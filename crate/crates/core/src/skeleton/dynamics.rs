use nalgebra::DMatrix;

use super::kinematics::fk_unchecked;
use super::{dot, ModelSpec, Root};
use crate::error::ensure_dim;
use crate::Result;

/// World position of each link's center of mass.
fn com_positions(spec: &ModelSpec, kin: &super::Kinematics) -> Vec<[f64; 2]> {
    spec.links.iter().enumerate().map(|(i, l)| kin.point(i, [l.com, 0.0])).collect()
}

/// Generalized mass matrix `M(q)`.
pub fn mass_matrix(spec: &ModelSpec, q: &[f64]) -> Result<DMatrix<f64>> {
    ensure_dim!(q.len(), spec.n_q(), "generalized coordinates");
    let kin = fk_unchecked(spec, q);
    let mut m = DMatrix::zeros(spec.n_q(), spec.n_q());
    accumulate_mass_matrix(spec, &kin, &mut m);
    Ok(m)
}

pub(crate) fn accumulate_mass_matrix(spec: &ModelSpec, kin: &super::Kinematics, out: &mut DMatrix<f64>) {
    let n = spec.n_q();
    out.fill(0.0);
    let coms = com_positions(spec, kin);
    let mut cols: Vec<(usize, [f64; 2])> = Vec::with_capacity(n);
    let mut rot: Vec<usize> = Vec::with_capacity(n);
    for (i, link) in spec.links.iter().enumerate() {
        if i == 0 && !spec.is_floating() {
            continue;
        }
        cols.clear();
        kin.for_each_jacobian_column(spec, i, coms[i], |k, c| cols.push((k, c)));
        for &(a, ca) in &cols {
            for &(b, cb) in &cols {
                out[(a, b)] += link.mass * dot(ca, cb);
            }
        }
        rot.clear();
        kin.for_each_rotating_coord(spec, i, |k| rot.push(k));
        for &a in &rot {
            for &b in &rot {
                out[(a, b)] += link.inertia;
            }
        }
    }
}

/// Coriolis, centrifugal, gravity and joint-damping generalized forces.
///
/// Evaluated as `sum_l J_l^T m_l (a_l - g) + D dq`, where `a_l` is the
/// center-of-mass acceleration produced by `dq` alone (zero `ddq`). In the plane
/// angular Jacobians are constant, so rotational inertia contributes nothing here.
pub fn bias_forces(spec: &ModelSpec, q: &[f64], dq: &[f64]) -> Result<Vec<f64>> {
    ensure_dim!(q.len(), spec.n_q(), "generalized coordinates");
    ensure_dim!(dq.len(), spec.n_q(), "generalized velocities");
    let kin = fk_unchecked(spec, q);
    let mut out = vec![0.0; spec.n_q()];
    accumulate_bias(spec, &kin, dq, &mut out);
    Ok(out)
}

pub(crate) fn accumulate_bias(spec: &ModelSpec, kin: &super::Kinematics, dq: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let n_links = spec.links.len();
    let r = spec.root_dofs();
    let coms = com_positions(spec, kin);
    // Angular velocity and velocity-only acceleration of each link origin.
    let mut omega = vec![0.0; n_links];
    let mut acc_origin = vec![[0.0; 2]; n_links];
    if let Root::Floating { .. } = spec.root {
        omega[0] = dq[2];
    }
    for (k, j) in spec.joints.iter().enumerate() {
        let p = j.parent;
        let w = omega[p];
        let d = super::sub(kin.origin[j.child], kin.origin[p]);
        acc_origin[j.child] = [acc_origin[p][0] - w * w * d[0], acc_origin[p][1] - w * w * d[1]];
        omega[j.child] = w + dq[r + k];
    }
    let g = spec.gravity;
    for (i, link) in spec.links.iter().enumerate() {
        if i == 0 && !spec.is_floating() {
            continue;
        }
        let w = omega[i];
        let d = super::sub(coms[i], kin.origin[i]);
        let a = [acc_origin[i][0] - w * w * d[0], acc_origin[i][1] - w * w * d[1] + g];
        let f = [link.mass * a[0], link.mass * a[1]];
        kin.for_each_jacobian_column(spec, i, coms[i], |k, c| out[k] += dot(c, f));
    }
    for (k, j) in spec.joints.iter().enumerate() {
        out[r + k] += j.damping * dq[r + k];
    }
}

/// Kinetic energy `½ Σ m v² + ½ Σ I ω²`, computed link by link.
pub fn kinetic_energy(spec: &ModelSpec, q: &[f64], dq: &[f64]) -> Result<f64> {
    ensure_dim!(q.len(), spec.n_q(), "generalized coordinates");
    ensure_dim!(dq.len(), spec.n_q(), "generalized velocities");
    let kin = fk_unchecked(spec, q);
    let coms = com_positions(spec, &kin);
    let mut e = 0.0;
    for (i, link) in spec.links.iter().enumerate() {
        let mut v = [0.0; 2];
        kin.for_each_jacobian_column(spec, i, coms[i], |k, c| {
            v[0] += c[0] * dq[k];
            v[1] += c[1] * dq[k];
        });
        let mut w = 0.0;
        kin.for_each_rotating_coord(spec, i, |k| w += dq[k]);
        if i == 0 && !spec.is_floating() {
            continue;
        }
        e += 0.5 * link.mass * dot(v, v) + 0.5 * link.inertia * w * w;
    }
    Ok(e)
}

/// Gravitational potential energy relative to `z = 0`.
pub fn potential_energy(spec: &ModelSpec, q: &[f64]) -> Result<f64> {
    ensure_dim!(q.len(), spec.n_q(), "generalized coordinates");
    let kin = fk_unchecked(spec, q);
    let coms = com_positions(spec, &kin);
    Ok(spec
        .links
        .iter()
        .enumerate()
        .filter(|(i, _)| *i > 0 || spec.is_floating())
        .map(|(i, l)| l.mass * spec.gravity * coms[i][1])
        .sum())
}
