//! Hill-type muscle-tendon units.
//!
//! Force is `F = f_max * (act * f_l(l_m) * f_v(v_m) + f_p(l_m))` with a rigid
//! tendon, so the normalized fiber length is `(L_mtu - l_slack) / l_opt` and the
//! normalized fiber velocity is `dL/dt / (l_opt * v_max)` (negative when
//! shortening).
//!
//! The curve shapes are smooth analytic surrogates anchored at the usual
//! values: `f_l(1) = 1`, `f_v(0) = 1`, `f_v(-1) = 0` and `f_p(l) = 0` for `l <= 1`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape parameters of the three force curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveParams {
    /// Width of the Gaussian active force-length curve.
    pub fl_width: f64,
    /// Curvature of the concentric (hyperbolic) force-velocity branch.
    pub fv_k_ce: f64,
    /// Eccentric force plateau reached for large lengthening velocities.
    pub f_ecc: f64,
    /// Exponential stiffness of the passive curve.
    pub fp_k: f64,
    /// Passive force (in units of `f_max`) at `l_m = 1.5`.
    pub fp_ref: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self { fl_width: 0.45, fv_k_ce: 4.0, f_ecc: 1.4, fp_k: 4.0, fp_ref: 1.0 }
    }
}

/// Where a muscle path passes through: a point fixed on a link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViaPoint {
    pub link: usize,
    pub offset: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuscleParams {
    pub name: String,
    /// Maximum isometric force, N.
    pub f_max: f64,
    /// Optimal fiber length, m.
    pub l_opt: f64,
    /// Maximum shortening velocity, optimal lengths per second.
    pub v_max: f64,
    /// Tendon slack length, m.
    pub l_slack: f64,
    pub tau_act: f64,
    pub tau_deact: f64,
    pub via_points: Vec<ViaPoint>,
    pub curves: CurveParams,
}

impl MuscleParams {
    pub const TAU_ACT: f64 = 0.010;
    pub const TAU_DEACT: f64 = 0.040;

    /// Checks the parameter invariants. Link references are checked by the model.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("muscle '{}': {what}", self.name)));
        if !(self.f_max > 0.0) {
            return bad("f_max must be positive");
        }
        if !(self.l_opt > 0.0) {
            return bad("l_opt must be positive");
        }
        if !(self.v_max > 0.0) {
            return bad("v_max must be positive");
        }
        if !(self.l_slack >= 0.0) {
            return bad("l_slack must be non-negative");
        }
        if !(self.tau_act > 0.0 && self.tau_act <= self.tau_deact) {
            return bad("time constants must satisfy 0 < tau_act <= tau_deact");
        }
        if self.via_points.len() < 2 {
            return bad("needs at least two via points");
        }
        let first = self.via_points[0].link;
        if self.via_points.iter().all(|v| v.link == first) {
            return bad("via points must span at least two links");
        }
        Ok(())
    }

    /// Normalized fiber length for a given path length (rigid tendon).
    pub fn fiber_length(&self, mtu_length: f64) -> f64 {
        (mtu_length - self.l_slack) / self.l_opt
    }

    /// Converts a path-length rate (m/s) into the normalized fiber velocity.
    pub fn fiber_velocity(&self, mtu_rate: f64) -> f64 {
        mtu_rate / (self.l_opt * self.v_max)
    }

    /// Converts a normalized fiber velocity back to m/s.
    pub fn fiber_speed_mps(&self, v_m: f64) -> f64 {
        v_m * self.l_opt * self.v_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MuscleState {
    pub act: f64,
    pub l_m: f64,
    pub v_m: f64,
    pub f_m: f64,
}

/// Active force-length gain, a Gaussian bump peaking at `l_m = 1`.
pub fn force_length_active(l_m: f64, curves: &CurveParams) -> Result<f64> {
    if !(l_m > 0.0) {
        return Err(Error::Domain(format!("fiber length must be positive, got {l_m}")));
    }
    let d = (l_m - 1.0) / curves.fl_width;
    Ok((-d * d).exp())
}

/// Force-velocity gain. Hyperbolic concentric branch reaching zero at `v_m = -1`,
/// rational eccentric branch saturating at `f_ecc` with a slope matched at zero.
pub fn force_velocity(v_m: f64, curves: &CurveParams) -> f64 {
    let k = curves.fv_k_ce;
    if v_m <= -1.0 {
        0.0
    } else if v_m <= 0.0 {
        (v_m + 1.0) / (1.0 - v_m / k)
    } else {
        let slope0 = 1.0 + 1.0 / k;
        let rise = curves.f_ecc - 1.0;
        let b = rise / slope0;
        1.0 + rise * v_m / (v_m + b)
    }
}

/// Passive force-length gain: zero up to optimal length, exponential beyond.
pub fn force_passive(l_m: f64, curves: &CurveParams) -> Result<f64> {
    if !(l_m > 0.0) {
        return Err(Error::Domain(format!("fiber length must be positive, got {l_m}")));
    }
    if l_m <= 1.0 {
        return Ok(0.0);
    }
    let k = curves.fp_k;
    Ok(curves.fp_ref * ((k * (l_m - 1.0)).exp() - 1.0) / ((k * 0.5).exp() - 1.0))
}

/// Muscle-tendon force in newtons.
pub fn mtu_force(act: f64, l_m: f64, v_m: f64, params: &MuscleParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&act) {
        return Err(Error::Domain(format!("activation must lie in [0, 1], got {act}")));
    }
    let c = &params.curves;
    let fl = force_length_active(l_m, c)?;
    let fv = force_velocity(v_m, c);
    let fp = force_passive(l_m, c)?;
    Ok(params.f_max * (act * fl * fv + fp))
}

/// Activation-dependent time constant: faster rise than decay.
pub fn activation_time_constant(act: f64, u: f64, tau_act: f64, tau_deact: f64) -> f64 {
    if u > act {
        tau_act * (0.5 + 1.5 * act)
    } else {
        tau_deact / (0.5 + 1.5 * act)
    }
}

/// Advances activation by `dt` with the exact exponential update, the time
/// constant frozen at its value at the start of the step.
pub fn activation_step(act: f64, u: f64, dt: f64, tau_act: f64, tau_deact: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&act) || !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!(
            "activation and excitation must lie in [0, 1], got act={act}, u={u}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    let tau = activation_time_constant(act, u, tau_act, tau_deact);
    Ok(relax(act, u, dt, tau).clamp(0.0, 1.0))
}

/// Exact solution of `da/dt = (u - a) / tau` over `dt` for a fixed `tau`.
pub fn relax(act: f64, u: f64, dt: f64, tau: f64) -> f64 {
    u + (act - u) * (-dt / tau).exp()
}
