//! Regenerates the bundled marker files and references under `assets/`.
//!
//! ```text
//! cargo run -p myotrack --example make_assets
//! ```

use std::f64::consts::PI;
use std::sync::Arc;

use myotrack::env::{EnvConfig, OracleController, OracleGains, ReferenceTrajectory, RewardConfig};
use myotrack::learn::{evaluate, Controller};
use myotrack::retarget::{retarget, MarkerTrajectory, RetargetConfig};
use myotrack::skeleton::{forward_kinematics, ModelSpec};
use myotrack::{asset_path, Result, DT_CTRL};

const MARKER_RATE: f64 = 100.0;

fn markers(spec: &ModelSpec, qs: &[Vec<f64>]) -> Result<MarkerTrajectory> {
    let names = spec.markers.iter().map(|m| m.name.clone()).collect();
    let frames = qs
        .iter()
        .map(|q| {
            let kin = forward_kinematics(spec, q)?;
            Ok(spec.markers.iter().map(|m| kin.point(m.link, m.offset)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    MarkerTrajectory::new(MARKER_RATE, names, frames)
}

/// Pose at gait phase `s` (cycles): alternating hip swing with knee flexion
/// during swing.
fn walker_pose(s: f64, speed: f64) -> Vec<f64> {
    let w = 2.0 * PI;
    let leg = |p: f64| {
        let hip = 0.1 + 0.35 * (w * p).sin();
        let knee = -0.1 - 0.55 * (w * p + 1.2).sin().max(0.0).powi(2);
        [hip, knee]
    };
    let [hl, kl] = leg(s);
    let [hr, kr] = leg(s + 0.5);
    vec![speed * s, 0.9 + 0.015 * (2.0 * w * s).cos(), 0.05 + 0.02 * (2.0 * w * s).sin(), hl, kl, hr, kr]
}

fn main() -> Result<()> {
    // Pendulum: half-amplitude swing about hanging, two seconds.
    let pendulum = ModelSpec::load(asset_path("models/pendulum.toml"))?;
    let (mut q, mut dq) = (Vec::new(), Vec::new());
    for f in 0..=100 {
        let t = f as f64 * DT_CTRL;
        q.push(vec![-PI / 2.0 + 0.5 * (PI * t).sin()]);
        dq.push(vec![0.5 * PI * (PI * t).cos()]);
    }
    ReferenceTrajectory::from_motion(&pendulum, q, dq, true)?
        .save(&pendulum, &asset_path("references/pendulum.csv"))?;

    // Arm: two reaching cycles from markers, with oracle activations as the measured EMG.
    let arm = ModelSpec::load(asset_path("models/arm.toml"))?;
    let qs: Vec<Vec<f64>> = (0..=400)
        .map(|f| {
            let t = f as f64 / MARKER_RATE;
            vec![0.6 + 0.4 * (PI * t).sin(), 1.2 + 0.5 * (PI * t + 1.0).sin()]
        })
        .collect();
    let arm_markers = markers(&arm, &qs)?;
    arm_markers.save(&asset_path("markers/arm_reach.csv"))?;
    let cfg = RetargetConfig { cyclic: true, ..RetargetConfig::default() };
    let mut reference = retarget(&arm, &arm_markers, &cfg)?.reference;
    let oracle = OracleController::new(&arm, OracleGains::default())?;
    let (log, summary) = evaluate(
        Arc::new(arm.clone()),
        Arc::new(reference.clone()),
        &EnvConfig::default(),
        &RewardConfig::default(),
        Controller::Oracle(&oracle),
        &|_: &[f64]| 0.0,
        0,
    )?;
    let mut emg = vec![log.act[0].iter().map(|_| 0.01).collect::<Vec<f64>>()];
    emg.extend(log.act.iter().cloned());
    reference.emg = Some(emg);
    reference.save(&arm, &asset_path("references/arm.csv"))?;
    println!(
        "arm reference: {} frames, oracle E_joint {:.3} deg, power {:.2} W",
        reference.len(),
        summary.e_joint_deg,
        summary.mean_abs_power_w
    );

    // Walker: one gait cycle plus the 0.1 s blend overlap at the control rate, retargeted and extended to four cycles.
    let walker = ModelSpec::load(asset_path("models/walker.toml"))?;
    let period = 1.0;
    let qs: Vec<Vec<f64>> =
        (0..=108).map(|f| walker_pose(f as f64 / MARKER_RATE / period, 1.2 * period)).collect();
    let walker_markers = markers(&walker, &qs)?;
    walker_markers.save(&asset_path("markers/walker_gait.csv"))?;
    let cfg = RetargetConfig { cycles: 4, blend_s: 0.1, ..RetargetConfig::default() };
    let out = retarget(&walker, &walker_markers, &cfg)?;
    out.reference.save(&walker, &asset_path("references/walker_gait.csv"))?;
    println!(
        "walker reference: {} frames, marker rms {:.2e} m, ground shift {:.4} m",
        out.reference.len(),
        out.marker_rms(&walker, &walker_markers)?,
        out.ground_shift
    );
    Ok(())
}
