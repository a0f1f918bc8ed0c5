use crate::env::ReferenceTrajectory;
use crate::skeleton::{forward_kinematics, ModelSpec};
use crate::{Error, Result};

/// Central differences inside, second-order one-sided differences at both ends.
pub fn finite_difference_velocity(q: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>> {
    let n = q.len();
    if n < 3 {
        return Err(Error::Contract(format!("finite differences need at least 3 frames, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("dt must be positive, got {dt}")));
    }
    let dim = q[0].len();
    let mut out = vec![vec![0.0; dim]; n];
    for c in 0..dim {
        out[0][c] = (-3.0 * q[0][c] + 4.0 * q[1][c] - q[2][c]) / (2.0 * dt);
        for t in 1..n - 1 {
            out[t][c] = (q[t + 1][c] - q[t - 1][c]) / (2.0 * dt);
        }
        out[n - 1][c] = (3.0 * q[n - 1][c] - 4.0 * q[n - 2][c] + q[n - 3][c]) / (2.0 * dt);
    }
    Ok(out)
}

/// Lowest contact-sphere bottom over all frames.
pub fn min_contact_height(spec: &ModelSpec, q: &[Vec<f64>]) -> Result<f64> {
    let mut low = f64::INFINITY;
    for frame in q {
        let kin = forward_kinematics(spec, frame)?;
        for c in &spec.contacts {
            low = low.min(kin.point(c.link, c.offset)[1] - c.radius);
        }
    }
    Ok(low)
}

/// Shifts the root height so the lowest contact over the whole sequence sits
/// on the ground. Returns the shift applied to the root height.
pub fn ground_offset(spec: &ModelSpec, q: &mut [Vec<f64>]) -> Result<f64> {
    if !spec.is_floating() {
        log::warn!("ground offset skipped: model '{}' has a fixed base", spec.name);
        return Ok(0.0);
    }
    if spec.contacts.is_empty() || q.is_empty() {
        log::warn!("ground offset skipped: no contacts or no frames");
        return Ok(0.0);
    }
    let shift = -min_contact_height(spec, q)?;
    for frame in q.iter_mut() {
        frame[1] += shift;
    }
    Ok(shift)
}

/// Linear interpolation of a frame-major series onto a new sampling interval.
pub fn resample(series: &[Vec<f64>], from_dt: f64, to_dt: f64) -> Vec<Vec<f64>> {
    if series.len() < 2 || (from_dt - to_dt).abs() < 1e-12 {
        return series.to_vec();
    }
    let duration = (series.len() - 1) as f64 * from_dt;
    let n = (duration / to_dt + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|k| {
            let s = k as f64 * to_dt / from_dt;
            let i = (s.floor() as usize).min(series.len() - 2);
            let w = s - i as f64;
            series[i].iter().zip(&series[i + 1]).map(|(a, b)| a + w * (b - a)).collect()
        })
        .collect()
}

fn blend_rows(out: &mut Vec<Vec<f64>>, next: &[Vec<f64>], overlap: usize) {
    let start = out.len() - overlap;
    for j in 0..overlap {
        let w = (j + 1) as f64 / (overlap + 1) as f64;
        for (a, b) in out[start + j].iter_mut().zip(&next[j]) {
            *a = (1.0 - w) * *a + w * b;
        }
    }
    out.extend_from_slice(&next[overlap..]);
}

/// Concatenates `n_cycles` copies of a cyclic reference.
///
/// Consecutive cycles overlap by `round(blend_window / dt)` frames, which are
/// cross-faded linearly. The last overlapping frames of a cycle must be at the
/// same phase as its first frames. For floating roots the horizontal root
/// position advances by the per-cycle displacement.
pub fn cycle_extend(
    spec: &ModelSpec,
    single: &ReferenceTrajectory,
    n_cycles: usize,
    blend_window: f64,
) -> Result<ReferenceTrajectory> {
    if !single.cyclic {
        return Err(Error::Config("cycle extension needs a reference flagged cyclic".into()));
    }
    if n_cycles == 0 {
        return Err(Error::Config("n_cycles must be at least 1".into()));
    }
    let t = single.len();
    let cycle_duration = t as f64 * single.dt;
    if !(blend_window >= 0.0) || blend_window >= cycle_duration {
        return Err(Error::Config(format!(
            "blend window {blend_window} s must be non-negative and shorter than the cycle ({cycle_duration} s)"
        )));
    }
    if n_cycles == 1 {
        return Ok(single.clone());
    }
    let overlap = (blend_window / single.dt).round() as usize;
    if overlap >= t || t < 2 {
        return Err(Error::Config(format!("blend of {overlap} frames does not fit a {t}-frame cycle")));
    }
    let advance = if !spec.is_floating() {
        0.0
    } else if overlap > 0 {
        single.q[t - overlap][0] - single.q[0][0]
    } else {
        2.0 * single.q[t - 1][0] - single.q[t - 2][0] - single.q[0][0]
    };
    let mut q = single.q.clone();
    let mut dq = single.dq.clone();
    let mut emg = single.emg.clone();
    let mut grf = single.grf.clone();
    for k in 1..n_cycles {
        let shifted: Vec<Vec<f64>> = single
            .q
            .iter()
            .map(|r| {
                let mut r = r.clone();
                if spec.is_floating() {
                    r[0] += k as f64 * advance;
                }
                r
            })
            .collect();
        blend_rows(&mut q, &shifted, overlap);
        blend_rows(&mut dq, &single.dq, overlap);
        if let (Some(e), Some(src)) = (emg.as_mut(), single.emg.as_ref()) {
            blend_rows(e, src, overlap);
        }
        if let (Some(g), Some(src)) = (grf.as_mut(), single.grf.as_ref()) {
            blend_rows(g, src, overlap);
        }
    }
    let mut out = ReferenceTrajectory::from_motion(spec, q, dq, true)?;
    out.emg = emg;
    out.grf = grf;
    out.validate(spec)?;
    Ok(out)
}
