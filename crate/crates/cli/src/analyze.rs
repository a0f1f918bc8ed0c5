use std::ops::Range;
use std::path::{Path, PathBuf};

use myotrack::analyze::{
    cycle_mean_curves, gait_segment, moving_average, pca_ensemble, pearson, Channel, RolloutLog, CYCLE_POINTS,
};
use myotrack::env::ReferenceTrajectory;
use myotrack::skeleton::ModelSpec;
use myotrack::{Error, Result};
use serde::Serialize;

use crate::commands::{io_err, out_dir, say, write_rows};
use crate::manifest::RunManifest;
use crate::{AnalyzeCmd, Cli};

pub fn run(cli: &Cli, cmd: &AnalyzeCmd) -> Result<()> {
    let out = out_dir(cli, || PathBuf::from("runs/analyze"))?;
    let mut manifest = RunManifest::start("analyze", cli.seed.unwrap_or(0), None);
    manifest.write(&out)?;
    let written = match cmd {
        AnalyzeCmd::Pca { logs, channels } => pca(cli, &out, logs, channels)?,
        AnalyzeCmd::Compare { log, reference, model, period } => {
            compare(cli, &out, log, reference.as_deref(), model.as_deref(), *period)?
        }
        AnalyzeCmd::Gait { log, foot, threshold, smooth } => gait(cli, &out, log, *foot, *threshold, *smooth)?,
    };
    for p in written {
        manifest.add(p);
    }
    manifest.finish("completed");
    manifest.write(&out)
}

/// Log files named directly or found (sorted) in the given directories.
fn expand_logs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| io_err(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv") && f.with_extension("csv.meta.toml").exists())
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct PcaRow {
    component: usize,
    ratio: f64,
    cumulative: f64,
    degenerate: bool,
}

fn pca(cli: &Cli, out: &Path, inputs: &[PathBuf], channels: &[String]) -> Result<Vec<PathBuf>> {
    let paths = expand_logs(inputs)?;
    let logs = paths.iter().map(|p| RolloutLog::load(p)).collect::<Result<Vec<_>>>()?;
    let mut written = Vec::new();
    for name in channels {
        let channel: Channel = name.parse()?;
        let r = pca_ensemble(&logs, channel)?;
        let rows: Vec<PcaRow> = r
            .ratios
            .iter()
            .zip(&r.cumulative)
            .enumerate()
            .map(|(k, (ratio, cumulative))| PcaRow {
                component: k + 1,
                ratio: *ratio,
                cumulative: *cumulative,
                degenerate: r.degenerate,
            })
            .collect();
        let path = out.join(format!("pca_{name}.csv"));
        write_rows(&path, &rows)?;
        let head: Vec<String> = r.cumulative.iter().take(3).map(|c| format!("{c:.3}")).collect();
        let note = if r.degenerate { " (no variance)" } else { "" };
        say(cli, format!("{name}: {} logs, cumulative variance of first components {}{note}", logs.len(), head.join(", ")));
        written.push(path);
    }
    Ok(written)
}

fn fixed_cycles(len: usize, frames: usize) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while frames > 0 && start + frames < len {
        out.push(start..start + frames);
        start += frames;
    }
    out
}

/// Gait cycles from the first foot's smoothed vertical reaction when there
/// is ground contact, fixed-length cycles when a period is given, otherwise
/// the whole log as one cycle.
fn log_cycles(log: &RolloutLog, period: Option<f64>) -> Result<Vec<Range<usize>>> {
    if log.len() < 2 {
        return Err(Error::Contract("log has fewer than two steps".into()));
    }
    if !log.meta.feet.is_empty() {
        let window = (0.1 / log.meta.dt).round().max(1.0) as usize;
        let grf = moving_average(&log.vertical_grf(0), window);
        if let Ok(c) = gait_segment(&grf, log.meta.body_weight, 0.05) {
            return Ok(c);
        }
    }
    if let Some(p) = period {
        let c = fixed_cycles(log.len(), (p / log.meta.dt).round() as usize);
        if c.is_empty() {
            return Err(Error::NoCycles(format!("no complete {p} s cycle in {} steps", log.len())));
        }
        return Ok(c);
    }
    Ok(vec![0..log.len() - 1])
}

#[derive(Debug, Serialize)]
struct CompareRow {
    channel: String,
    pearson_cycle_mean: Option<f64>,
    pearson_raw: Option<f64>,
}

struct Pair {
    name: String,
    sim: Vec<f64>,
    reference: Vec<f64>,
}

fn column(rows: &[Vec<f64>], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c]).collect()
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn compare(
    cli: &Cli,
    out: &Path,
    log_path: &Path,
    reference: Option<&Path>,
    model: Option<&Path>,
    period: Option<f64>,
) -> Result<Vec<PathBuf>> {
    let log = RolloutLog::load(log_path)?;
    let cycles = log_cycles(&log, period)?;
    let mut pairs = Vec::new();
    let (sim_q, ref_q) = (log.joint_angles(), log.joint_reference());
    for (k, name) in log.meta.coords[log.meta.root_dofs..].iter().enumerate() {
        pairs.push(Pair { name: format!("joint_{name}"), sim: column(&sim_q, k), reference: column(&ref_q, k) });
    }
    if let (Some(rp), Some(mp)) = (reference, model) {
        let spec = ModelSpec::load(mp)?;
        let r = ReferenceTrajectory::load(&spec, rp)?;
        match r.emg.as_ref() {
            Some(emg) => {
                let offset = r.len().saturating_sub(log.len());
                for (k, name) in log.meta.muscles.iter().enumerate().take(r.n_emg()) {
                    let measured: Vec<f64> = (0..log.len()).map(|t| emg[(t + offset).min(r.len() - 1)][k]).collect();
                    pairs.push(Pair { name: format!("muscle_{name}"), sim: column(&log.act, k), reference: measured });
                }
            }
            None => log::warn!("{} has no EMG channels; comparing joints only", rp.display()),
        }
    }

    let mut rows = Vec::new();
    let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
    for p in &pairs {
        let sim = cycle_mean_curves(&p.sim.iter().map(|v| vec![*v]).collect::<Vec<_>>(), &cycles)?.remove(0);
        let re = cycle_mean_curves(&p.reference.iter().map(|v| vec![*v]).collect::<Vec<_>>(), &cycles)?.remove(0);
        rows.push(CompareRow {
            channel: p.name.clone(),
            pearson_cycle_mean: defined(pearson(&sim.0, &re.0))?,
            pearson_raw: defined(pearson(&p.sim, &p.reference))?,
        });
        curves.push((format!("{}_sim_mean", p.name), sim.0));
        curves.push((format!("{}_sim_std", p.name), sim.1));
        curves.push((format!("{}_ref_mean", p.name), re.0));
        curves.push((format!("{}_ref_std", p.name), re.1));
    }
    let cmp_path = out.join("compare.csv");
    write_rows(&cmp_path, &rows)?;
    let curve_path = out.join("curves.csv");
    write_curves(&curve_path, &curves)?;
    say(cli, format!("{} cycles, {} channels", cycles.len(), rows.len()));
    for r in &rows {
        let f = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
        say(cli, format!("{:<28} r(cycle mean) {:>9}  r(raw) {:>9}", r.channel, f(r.pearson_cycle_mean), f(r.pearson_raw)));
    }
    Ok(vec![cmp_path, curve_path])
}

fn write_curves(path: &Path, curves: &[(String, Vec<f64>)]) -> Result<()> {
    let err = |e: csv::Error| Error::Parse { path: path.into(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let mut header = vec!["phase".to_string()];
    header.extend(curves.iter().map(|c| c.0.clone()));
    w.write_record(&header).map_err(err)?;
    for k in 0..CYCLE_POINTS {
        let mut row = vec![(k as f64 / (CYCLE_POINTS - 1) as f64).to_string()];
        row.extend(curves.iter().map(|c| c.1[k].to_string()));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Serialize)]
struct CycleRow {
    cycle: usize,
    start: usize,
    end: usize,
    duration_s: f64,
}

fn gait(cli: &Cli, out: &Path, log_path: &Path, foot: usize, threshold: f64, smooth: f64) -> Result<Vec<PathBuf>> {
    let log = RolloutLog::load(log_path)?;
    if foot >= log.meta.feet.len() {
        return Err(Error::Config(format!(
            "{} has {} feet; foot index {foot} is out of range",
            log_path.display(),
            log.meta.feet.len()
        )));
    }
    let window = (smooth / log.meta.dt).round().max(1.0) as usize;
    let grf = moving_average(&log.vertical_grf(foot), window);
    let cycles = gait_segment(&grf, log.meta.body_weight, threshold)?;
    let rows: Vec<CycleRow> = cycles
        .iter()
        .enumerate()
        .map(|(k, c)| CycleRow { cycle: k, start: c.start, end: c.end, duration_s: c.len() as f64 * log.meta.dt })
        .collect();
    let cycles_path = out.join("gait_cycles.csv");
    write_rows(&cycles_path, &rows)?;

    let mut curves = Vec::new();
    let bw = log.meta.body_weight.max(f64::MIN_POSITIVE);
    for (f, name) in log.meta.feet.iter().enumerate() {
        let series: Vec<Vec<f64>> = moving_average(&log.vertical_grf(f), window).iter().map(|v| vec![v / bw]).collect();
        let (mean, std) = cycle_mean_curves(&series, &cycles)?.remove(0);
        curves.push((format!("grf_{name}_bw_mean"), mean));
        curves.push((format!("grf_{name}_bw_std"), std));
    }
    let joints = log.joint_angles();
    let names = &log.meta.coords[log.meta.root_dofs..];
    for (name, (mean, std)) in names.iter().zip(cycle_mean_curves(&joints, &cycles)?) {
        curves.push((format!("joint_{name}_mean"), mean));
        curves.push((format!("joint_{name}_std"), std));
    }
    let curve_path = out.join("gait_curves.csv");
    write_curves(&curve_path, &curves)?;
    let mean_len = rows.iter().map(|r| r.duration_s).sum::<f64>() / rows.len() as f64;
    say(cli, format!("{} cycles, mean duration {mean_len:.3} s", rows.len()));
    Ok(vec![cycles_path, curve_path])
}
