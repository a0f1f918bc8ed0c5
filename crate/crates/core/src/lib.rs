//! Muscle-actuated planar body simulation and motion-imitation learning.
//!
//! The crate is organised bottom-up:
//!
//! * [`muscle`] – Hill-type force generation and first-order activation dynamics.
//! * [`skeleton`] – planar articulated dynamics, via-point muscle routing and ground contact.
//! * [`env`] – the imitation environment: observations, tracking error, resets and rewards.
//! * [`nn`] – small MLPs with hand-written reverse-mode gradients and Adam.
//! * [`learn`] – on-policy learner with a discriminator reward and value-guided flow exploration.
//! * [`retarget`] – marker IK and the reference post-processing pipeline.
//! * [`analyze`] – tracking metrics, throughput benchmarking, gait statistics and PCA.

pub mod analyze;
pub mod env;
pub mod error;
pub mod learn;
pub mod muscle;
pub mod nn;
pub mod retarget;
pub mod skeleton;

pub use error::{Error, Result};

/// Directory holding the bundled models, references, marker files and experiment configs.
pub fn assets_dir() -> std::path::PathBuf {
    std::path::PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/assets"))
}

/// Path of a bundled asset, e.g. `asset_path("models/arm.toml")`.
pub fn asset_path(rel: &str) -> std::path::PathBuf {
    assets_dir().join(rel)
}

/// Physics substep, seconds.
pub const DT_SIM: f64 = 0.002;
/// Control step, seconds.
pub const DT_CTRL: f64 = 0.02;
/// Physics substeps per control step.
pub const SUBSTEPS: usize = 10;
