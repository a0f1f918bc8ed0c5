//! Planar articulated bodies driven by muscles.
//!
//! Conventions: the world is the sagittal `x`–`z` plane with `z` up and the
//! ground at `z = 0`. Every link has a local frame whose origin is its joint and
//! whose `x` axis runs along the link; angles are counter-clockwise from world
//! `+x`, so a link at angle `pi/2` points straight up. Link 0 is the root. A
//! floating root contributes the generalized coordinates `(x, z, pitch)` ahead
//! of the hinge angles; a fixed root contributes none.

mod check;
mod contact;
mod dynamics;
mod kinematics;
mod model;
mod sim;

pub use check::{spot_check, SpotCheck};
pub use contact::{contact_forces, ContactReport};
pub use dynamics::{bias_forces, kinetic_energy, mass_matrix, potential_energy};
pub use kinematics::{forward_kinematics, moment_arms, mtu_length, mtu_length_and_gradient, Kinematics};
pub use model::{ContactParams, ContactSphere, Joint, Link, Marker, MarkerClass, ModelSpec, Root};
pub use sim::{step, SimState, StepReport};

/// Counter-clockwise perpendicular of a planar vector.
#[inline]
pub(crate) fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

#[inline]
pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn norm(a: [f64; 2]) -> f64 {
    dot(a, a).sqrt()
}
