//! Tracking metrics, correlation, gait-cycle statistics, ensemble PCA and
//! throughput measurement.

mod bench;
mod log;

use std::ops::Range;

use nalgebra::DMatrix;

pub use bench::{sps_benchmark, standing_reference, SpsRow};
pub use log::{Channel, LogMeta, RolloutLog};

use crate::{Error, Result};

/// Phase points per resampled cycle (0 to 100 % in 1 % steps).
pub const CYCLE_POINTS: usize = 101;

fn check_rows<T>(a: &[Vec<T>], b: &[Vec<T>], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("{what}: {} frames vs {}", a.len(), b.len())));
    }
    if a.iter().zip(b).any(|(x, y)| x.len() != y.len()) || a.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::Contract(format!("{what}: inconsistent row widths")));
    }
    if a.is_empty() || a[0].is_empty() {
        return Err(Error::Contract(format!("{what}: empty series")));
    }
    Ok(())
}

/// Mean absolute joint-angle error in degrees over frames and joints.
/// Inputs hold joint angles only (root coordinates removed).
pub fn e_joint(sim: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    check_rows(sim, reference, "joint series")?;
    let n = (sim.len() * sim[0].len()) as f64;
    let total: f64 = sim.iter().zip(reference).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs())).sum();
    Ok((total / n).to_degrees())
}

/// Mean Euclidean key-body position error in meters over frames and bodies.
pub fn e_body(sim: &[Vec<[f64; 2]>], reference: &[Vec<[f64; 2]>]) -> Result<f64> {
    check_rows(sim, reference, "key-body series")?;
    let n = (sim.len() * sim[0].len()) as f64;
    let total: f64 = sim
        .iter()
        .zip(reference)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])))
        .sum();
    Ok(total / n)
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Contract(format!("pearson needs two equal series of length >= 2, got {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("a series has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Centered sliding-window mean; the window shrinks at the edges.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Cycle boundaries at upward crossings of `threshold_frac · body_weight` by
/// the vertical ground reaction. Each range runs from one crossing to the next.
pub fn gait_segment(grf_z: &[f64], body_weight: f64, threshold_frac: f64) -> Result<Vec<Range<usize>>> {
    let thr = threshold_frac * body_weight;
    let crossings: Vec<usize> = (1..grf_z.len()).filter(|&t| grf_z[t - 1] <= thr && grf_z[t] > thr).collect();
    if crossings.len() < 2 {
        return Err(Error::NoCycles(format!("{} upward crossings of {thr:.3} N", crossings.len())));
    }
    Ok(crossings.windows(2).map(|w| w[0]..w[1]).collect())
}

/// Linear resampling of `x[range.start..=range.end]` onto [`CYCLE_POINTS`] phase points.
pub fn resample_cycle(x: &[f64], range: &Range<usize>) -> Result<Vec<f64>> {
    if range.end >= x.len() || range.end <= range.start {
        return Err(Error::Contract(format!("cycle {range:?} outside a series of {} samples", x.len())));
    }
    let span = (range.end - range.start) as f64;
    Ok((0..CYCLE_POINTS)
        .map(|k| {
            let pos = range.start as f64 + span * k as f64 / (CYCLE_POINTS - 1) as f64;
            let i = (pos.floor() as usize).min(range.end - 1);
            let w = pos - i as f64;
            x[i] * (1.0 - w) + x[i + 1] * w
        })
        .collect())
}

/// Pointwise mean and population standard deviation over equal-length cycles.
pub fn cycle_stats(cycles: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let Some(first) = cycles.first() else {
        return Err(Error::NoCycles("no cycles to average".into()));
    };
    if cycles.iter().any(|c| c.len() != first.len()) {
        return Err(Error::Contract("cycles have different lengths".into()));
    }
    let n = cycles.len() as f64;
    let mean: Vec<f64> = (0..first.len()).map(|k| cycles.iter().map(|c| c[k]).sum::<f64>() / n).collect();
    let std = (0..first.len())
        .map(|k| (cycles.iter().map(|c| (c[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    Ok((mean, std))
}

/// Cycle-averaged curve of each column of `series` over the given cycles.
pub fn cycle_mean_curves(series: &[Vec<f64>], cycles: &[Range<usize>]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let width = series.first().map_or(0, Vec::len);
    (0..width)
        .map(|c| {
            let col: Vec<f64> = series.iter().map(|r| r[c]).collect();
            let resampled = cycles.iter().map(|r| resample_cycle(&col, r)).collect::<Result<Vec<_>>>()?;
            cycle_stats(&resampled)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    /// Explained variance ratio per component, descending.
    pub ratios: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub components: usize,
    /// Set when the rows have no variance; ratios are then all zero.
    pub degenerate: bool,
}

/// PCA of row vectors: mean-center, singular values, squared-value ratios.
pub fn pca(rows: &[Vec<f64>]) -> Result<PcaResult> {
    if rows.len() < 2 {
        return Err(Error::Contract(format!("pca needs at least 2 rows, got {}", rows.len())));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Contract("pca rows must be non-empty and of equal length".into()));
    }
    let n = rows.len();
    let mut x = DMatrix::<f64>::zeros(n, d);
    for j in 0..d {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        for i in 0..n {
            x[(i, j)] = rows[i][j] - mean;
        }
    }
    let components = n.min(d);
    let mut sv: Vec<f64> = x.svd(false, false).singular_values.iter().map(|s| s * s).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sv.iter().sum();
    let scale = sv.first().copied().unwrap_or(0.0).max(1e-300);
    if total <= 1e-24 * scale.max(1.0) || total == 0.0 {
        return Ok(PcaResult {
            ratios: vec![0.0; components],
            cumulative: vec![0.0; components],
            components,
            degenerate: true,
        });
    }
    let ratios: Vec<f64> = sv.iter().map(|s| s / total).collect();
    let mut acc = 0.0;
    let cumulative = ratios
        .iter()
        .map(|r| {
            acc += r;
            acc.min(1.0)
        })
        .collect();
    Ok(PcaResult { ratios, cumulative, components, degenerate: false })
}

/// PCA over logs, each flattened (time-major) into one row of the chosen channel group.
pub fn pca_ensemble(logs: &[RolloutLog], channel: Channel) -> Result<PcaResult> {
    if logs.len() < 2 {
        return Err(Error::Contract(format!("ensemble needs at least 2 logs, got {}", logs.len())));
    }
    let len = logs[0].len();
    if let Some(bad) = logs.iter().position(|l| l.len() != len) {
        return Err(Error::Contract(format!("log {bad} has {} steps, expected {len}", logs[bad].len())));
    }
    let rows: Vec<Vec<f64>> = logs.iter().map(|l| l.channel(channel).into_iter().flatten().collect()).collect();
    pca(&rows)
}

/// Summary of one evaluated rollout against its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSummary {
    pub e_joint_deg: f64,
    pub e_body_m: f64,
    /// Mean absolute root translation error, m (zero for fixed-base models).
    pub root_translation_m: f64,
    /// Mean absolute root rotation error, degrees.
    pub root_rotation_deg: f64,
    pub mean_abs_power_w: f64,
    pub mean_reward: f64,
    pub steps: usize,
}

pub fn summarize(log: &RolloutLog) -> Result<TrackingSummary> {
    let e_joint_deg = e_joint(&log.joint_angles(), &log.joint_reference())?;
    let e_body_m = e_body(&log.key_pos, &log.key_ref)?;
    let n = log.len().max(1) as f64;
    let r = log.meta.root_dofs;
    let (mut trans, mut rot) = (0.0, 0.0);
    if r == 3 {
        for (q, qr) in log.q.iter().zip(&log.q_ref) {
            trans += (q[0] - qr[0]).hypot(q[1] - qr[1]) / n;
            rot += crate::env::wrap_angle(q[2] - qr[2]).abs() / n;
        }
    }
    Ok(TrackingSummary {
        e_joint_deg,
        e_body_m,
        root_translation_m: trans,
        root_rotation_deg: rot.to_degrees(),
        mean_abs_power_w: log.mean_abs_power(),
        mean_reward: log.reward.iter().sum::<f64>() / n,
        steps: log.len(),
    })
}
