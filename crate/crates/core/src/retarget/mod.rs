//! Marker-based inverse kinematics and reference post-processing.

mod filter;
mod ik;
mod markers;
mod post;

use serde::{Deserialize, Serialize};

pub use filter::{butterworth_lowpass, lowpass_columns, Biquad};
pub use ik::{ik_objective, ik_solve_frame, ik_solve_sequence, initial_guess, IkConfig, IkSolution};
pub use markers::MarkerTrajectory;
pub use post::{cycle_extend, finite_difference_velocity, ground_offset, min_contact_height, resample};

use crate::env::ReferenceTrajectory;
use crate::skeleton::ModelSpec;
use crate::{Error, Result, DT_CTRL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetargetConfig {
    pub ik: IkConfig,
    /// Low-pass cutoff applied to the solved coordinates, Hz.
    pub cutoff_hz: f64,
    /// Mark the output cyclic even when not extended.
    pub cyclic: bool,
    pub cycles: usize,
    /// Cross-fade window at each cycle seam, seconds.
    pub blend_s: f64,
}

impl Default for RetargetConfig {
    fn default() -> Self {
        RetargetConfig { ik: IkConfig::default(), cutoff_hz: 20.0, cyclic: false, cycles: 1, blend_s: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct Retargeted {
    pub reference: ReferenceTrajectory,
    pub ik: Vec<IkSolution>,
    /// Shift added to the root height by the ground correction, m.
    pub ground_shift: f64,
}

impl Retargeted {
    /// Root-mean-square marker error over all solved frames, m.
    pub fn marker_rms(&self, spec: &ModelSpec, traj: &MarkerTrajectory) -> Result<f64> {
        let cols = traj.columns_for(spec)?;
        let mut sum = 0.0;
        let mut n = 0usize;
        for (t, sol) in self.ik.iter().enumerate() {
            let kin = crate::skeleton::forward_kinematics(spec, &sol.q)?;
            for (m, target) in spec.markers.iter().zip(traj.targets(&cols, t)) {
                let p = kin.point(m.link, m.offset);
                sum += (p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2);
                n += 1;
            }
        }
        Ok((sum / n.max(1) as f64).sqrt())
    }
}

/// IK, low-pass filtering, resampling to the control rate, ground correction,
/// finite-difference velocities and optional cycle extension.
pub fn retarget(spec: &ModelSpec, traj: &MarkerTrajectory, cfg: &RetargetConfig) -> Result<Retargeted> {
    if cfg.cycles == 0 {
        return Err(Error::Config("cycles must be at least 1".into()));
    }
    let ik = ik_solve_sequence(spec, traj, &cfg.ik)?;
    let raw: Vec<Vec<f64>> = ik.iter().map(|s| s.q.clone()).collect();
    let filtered = lowpass_columns(&raw, cfg.cutoff_hz, traj.rate)?;
    let mut q = resample(&filtered, traj.dt(), DT_CTRL);
    let ground_shift = if spec.is_floating() { ground_offset(spec, &mut q)? } else { 0.0 };
    let dq = finite_difference_velocity(&q, DT_CTRL)?;
    let single = ReferenceTrajectory::from_motion(spec, q, dq, cfg.cyclic || cfg.cycles > 1)?;
    let reference = if cfg.cycles > 1 { cycle_extend(spec, &single, cfg.cycles, cfg.blend_s)? } else { single };
    Ok(Retargeted { reference, ik, ground_shift })
}
