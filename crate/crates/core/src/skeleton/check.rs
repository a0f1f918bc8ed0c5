use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mass_matrix, moment_arms, mtu_length, ModelSpec};
use crate::Result;

/// Worst-case numbers from [`spot_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotCheck {
    pub samples: usize,
    /// Largest `|M - Mᵀ|` entry.
    pub max_asymmetry: f64,
    /// Smallest mass-matrix eigenvalue.
    pub min_eigenvalue: f64,
    /// Largest relative gap between moment arms and the virtual-work estimate
    /// `-(L(q + h e_k) - L(q - h e_k)) / 2h`.
    pub max_moment_arm_error: f64,
}

impl SpotCheck {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.max_asymmetry < 1e-12) {
            out.push(format!("mass matrix asymmetry {:.3e}", self.max_asymmetry));
        }
        if !(self.min_eigenvalue > 0.0) {
            out.push(format!("mass matrix not positive definite (min eigenvalue {:.3e})", self.min_eigenvalue));
        }
        if !(self.max_moment_arm_error < 1e-4) {
            out.push(format!("moment arms disagree with path-length differences by {:.3e}", self.max_moment_arm_error));
        }
        out
    }
}

/// Mass-matrix and moment-arm checks at random configurations within the joint limits.
pub fn spot_check(spec: &ModelSpec, samples: usize, seed: u64) -> Result<SpotCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = spec.root_dofs();
    let h = 1e-6;
    let mut out = SpotCheck { samples, max_asymmetry: 0.0, min_eigenvalue: f64::INFINITY, max_moment_arm_error: 0.0 };
    for _ in 0..samples {
        let mut q: Vec<f64> = (0..spec.n_q()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for (k, j) in spec.joints.iter().enumerate() {
            if let Some([lo, hi]) = j.limits {
                q[r + k] = rng.gen_range(lo..hi);
            }
        }
        let m = mass_matrix(spec, &q)?;
        out.max_asymmetry = out.max_asymmetry.max((&m - m.transpose()).amax());
        out.min_eigenvalue = out.min_eigenvalue.min(m.symmetric_eigenvalues().min());
        let arms = moment_arms(spec, &q)?;
        for mi in 0..spec.n_muscles() {
            for k in 0..spec.n_q() {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += h;
                qm[k] -= h;
                let fd = -(mtu_length(spec, &qp, mi)? - mtu_length(spec, &qm, mi)?) / (2.0 * h);
                let err = (arms[(mi, k)] - fd).abs() / arms[(mi, k)].abs().max(1e-2);
                out.max_moment_arm_error = out.max_moment_arm_error.max(err);
            }
        }
    }
    Ok(out)
}
