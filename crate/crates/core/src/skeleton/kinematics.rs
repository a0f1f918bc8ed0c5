use nalgebra::DMatrix;

use super::{dot, norm, perp, sub, ModelSpec, Root};
use crate::error::ensure_dim;
use crate::Result;

/// World frames of every link for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    pub origin: Vec<[f64; 2]>,
    pub angle: Vec<f64>,
}

impl Kinematics {
    /// World position of a point given in the frame of `link`.
    #[inline]
    pub fn point(&self, link: usize, offset: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle[link].sin_cos();
        let o = self.origin[link];
        [o[0] + c * offset[0] - s * offset[1], o[1] + s * offset[0] + c * offset[1]]
    }

    /// Distal end of a link (its local `(length, 0)`), used as the key-body position.
    pub fn link_end(&self, spec: &ModelSpec, link: usize) -> [f64; 2] {
        self.point(link, [spec.links[link].length, 0.0])
    }

    pub fn key_positions(&self, spec: &ModelSpec) -> Vec<[f64; 2]> {
        spec.key_bodies.iter().map(|&b| self.link_end(spec, b)).collect()
    }

    pub fn key_angles(&self, spec: &ModelSpec) -> Vec<f64> {
        spec.key_bodies.iter().map(|&b| self.angle[b]).collect()
    }

    /// Calls `f(coord, d point / d q_coord)` for every coordinate that moves a
    /// world point `p` rigidly attached to `link`. Coordinates not visited
    /// have a zero column.
    #[inline]
    pub fn for_each_jacobian_column(
        &self,
        spec: &ModelSpec,
        link: usize,
        p: [f64; 2],
        mut f: impl FnMut(usize, [f64; 2]),
    ) {
        let mut l = link;
        while l > 0 {
            let j = &spec.joints[l - 1];
            f(spec.root_dofs() + l - 1, perp(sub(p, self.origin[l])));
            l = j.parent;
        }
        if spec.is_floating() {
            f(0, [1.0, 0.0]);
            f(1, [0.0, 1.0]);
            f(2, perp(sub(p, self.origin[0])));
        }
    }

    /// Dense `2 × n_q` Jacobian of a point attached to `link`, column-major pairs.
    pub fn point_jacobian(&self, spec: &ModelSpec, link: usize, p: [f64; 2]) -> Vec<[f64; 2]> {
        let mut cols = vec![[0.0; 2]; spec.n_q()];
        self.for_each_jacobian_column(spec, link, p, |k, c| cols[k] = c);
        cols
    }

    /// Calls `f(coord)` for every coordinate that rotates `link` (unit angular Jacobian).
    #[inline]
    pub fn for_each_rotating_coord(&self, spec: &ModelSpec, link: usize, mut f: impl FnMut(usize)) {
        let mut l = link;
        while l > 0 {
            f(spec.root_dofs() + l - 1);
            l = spec.joints[l - 1].parent;
        }
        if spec.is_floating() {
            f(2);
        }
    }
}

/// Composes link frames down the tree.
pub fn forward_kinematics(spec: &ModelSpec, q: &[f64]) -> Result<Kinematics> {
    ensure_dim!(q.len(), spec.n_q(), "generalized coordinates");
    Ok(fk_unchecked(spec, q))
}

pub(crate) fn fk_unchecked(spec: &ModelSpec, q: &[f64]) -> Kinematics {
    let n = spec.links.len();
    let mut origin = vec![[0.0; 2]; n];
    let mut angle = vec![0.0; n];
    match spec.root {
        Root::Fixed { origin: o, angle: a } => {
            origin[0] = o;
            angle[0] = a;
        }
        Root::Floating { rest_angle } => {
            origin[0] = [q[0], q[1]];
            angle[0] = rest_angle + q[2];
        }
    }
    let r = spec.root_dofs();
    let mut kin = Kinematics { origin, angle };
    for (k, j) in spec.joints.iter().enumerate() {
        let o = kin.point(j.parent, j.anchor);
        kin.origin[j.child] = o;
        kin.angle[j.child] = kin.angle[j.parent] + j.rest_angle + q[r + k];
    }
    kin
}

/// Path length of a muscle through its via points, m.
pub fn mtu_length(spec: &ModelSpec, q: &[f64], muscle: usize) -> Result<f64> {
    let kin = forward_kinematics(spec, q)?;
    Ok(path_length(spec, &kin, muscle))
}

pub(crate) fn path_length(spec: &ModelSpec, kin: &Kinematics, muscle: usize) -> f64 {
    let via = &spec.muscles[muscle].via_points;
    via.windows(2)
        .map(|w| norm(sub(kin.point(w[1].link, w[1].offset), kin.point(w[0].link, w[0].offset))))
        .sum()
}

/// Path length and its gradient with respect to `q`, written into `grad`.
pub fn mtu_length_and_gradient(spec: &ModelSpec, kin: &Kinematics, muscle: usize, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let via = &spec.muscles[muscle].via_points;
    let mut length = 0.0;
    for w in via.windows(2) {
        let a = kin.point(w[0].link, w[0].offset);
        let b = kin.point(w[1].link, w[1].offset);
        let d = sub(b, a);
        let len = norm(d);
        length += len;
        if len < 1e-12 {
            continue;
        }
        let e = [d[0] / len, d[1] / len];
        kin.for_each_jacobian_column(spec, w[1].link, b, |k, c| grad[k] += dot(e, c));
        kin.for_each_jacobian_column(spec, w[0].link, a, |k, c| grad[k] -= dot(e, c));
    }
    length
}

/// Moment-arm matrix `J_m = -dL/dq`, shape `n_muscles × n_q`, meters.
pub fn moment_arms(spec: &ModelSpec, q: &[f64]) -> Result<DMatrix<f64>> {
    let kin = forward_kinematics(spec, q)?;
    let n = spec.n_q();
    let mut out = DMatrix::zeros(spec.n_muscles(), n);
    let mut grad = vec![0.0; n];
    for m in 0..spec.n_muscles() {
        mtu_length_and_gradient(spec, &kin, m, &mut grad);
        for k in 0..n {
            out[(m, k)] = -grad[k];
        }
    }
    Ok(out)
}
