use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use log::info;
use myotrack::analyze::{sps_benchmark, TrackingSummary};
use myotrack::env::{OracleController, OracleGains};
use myotrack::learn::{append_csv_row, evaluate, truncate_csv_rows, Controller, ExperimentConfig, Trainer};
use myotrack::nn::Checkpoint;
use myotrack::retarget::{retarget, IkConfig, MarkerTrajectory, RetargetConfig};
use myotrack::skeleton::{spot_check, ModelSpec};
use myotrack::{Error, Result};
use serde::Serialize;

use crate::manifest::{sha256_hex, RunManifest};
use crate::{analyze, BenchArgs, Cli, Command, ControllerKind, EvalArgs, ModelCmd, OnOff, RetargetArgs, TrainArgs};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Model(ModelCmd::Validate { model, samples }) => model_validate(cli, model, *samples),
        Command::Retarget(args) => cmd_retarget(cli, args),
        Command::Train(args) => cmd_train(cli, args),
        Command::Eval(args) => cmd_eval(cli, args),
        Command::Bench(args) => cmd_bench(cli, args),
        Command::Analyze(cmd) => analyze::run(cli, cmd),
    }
}

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub fn out_dir(cli: &Cli, default: impl FnOnce() -> PathBuf) -> Result<PathBuf> {
    let dir = cli.out.clone().unwrap_or_else(default);
    create_dir(&dir)?;
    Ok(dir)
}

/// Prints to stdout unless `--quiet`.
pub fn say(cli: &Cli, line: impl AsRef<str>) {
    if !cli.quiet {
        println!("{}", line.as_ref());
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn model_validate(cli: &Cli, model: &Path, samples: usize) -> Result<()> {
    let spec = ModelSpec::load(model)?;
    let check = spot_check(&spec, samples, cli.seed.unwrap_or(0))?;
    say(
        cli,
        format!(
            "model '{}': {} links, {} coordinates, {} muscles, {} contacts, {} markers",
            spec.name,
            spec.links.len(),
            spec.n_q(),
            spec.n_muscles(),
            spec.contacts.len(),
            spec.markers.len()
        ),
    );
    say(
        cli,
        format!(
            "{} random poses: mass matrix asymmetry {:.1e}, min eigenvalue {:.3e}, moment-arm error {:.1e}",
            check.samples, check.max_asymmetry, check.min_eigenvalue, check.max_moment_arm_error
        ),
    );
    let problems = check.problems();
    if problems.is_empty() {
        say(cli, "ok");
        Ok(())
    } else {
        Err(Error::Config(format!("model '{}' failed: {}", spec.name, problems.join("; "))))
    }
}

fn cmd_retarget(cli: &Cli, args: &RetargetArgs) -> Result<()> {
    let spec = ModelSpec::load(&args.model)?;
    let markers = MarkerTrajectory::load(&args.markers)?;
    let cfg = RetargetConfig {
        ik: IkConfig { lambda_q: args.lambda_q, ..IkConfig::default() },
        cutoff_hz: args.cutoff,
        cyclic: args.cyclic,
        cycles: args.cycles,
        blend_s: args.blend,
    };
    cfg.ik.validate()?;
    let out = out_dir(cli, || PathBuf::from("runs/retarget"))?;
    let cfg_text = format!("{cfg:?}");
    let mut manifest = RunManifest::start("retarget", cli.seed.unwrap_or(0), Some(sha256_hex(cfg_text.as_bytes())));
    manifest.write(&out)?;
    let result = retarget(&spec, &markers, &cfg)?;
    let path = out.join("reference.csv");
    result.reference.save(&spec, &path)?;
    manifest.add(&path);
    manifest.finish("completed");
    manifest.write(&out)?;
    say(
        cli,
        format!(
            "{} marker frames at {} Hz -> {} reference frames; marker rms {:.2e} m; ground shift {:+.4} m; wrote {}",
            markers.len(),
            markers.rate,
            result.reference.len(),
            result.marker_rms(&spec, &markers)?,
            result.ground_shift,
            path.display()
        ),
    );
    Ok(())
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<(String, String)> {
    let text = cfg.snapshot().to_toml()?;
    let hash = sha256_hex(text.as_bytes());
    Ok((text, hash))
}

/// Saves into a sibling temporary directory, then swaps it into place.
fn save_checkpoint(trainer: &Trainer, dir: &Path, hash: &str) -> Result<()> {
    let tmp = dir.with_extension("tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
    }
    trainer.save_checkpoint(&tmp, &[("config_hash".to_string(), hash.to_string())])?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| io_err(dir, e))
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.flow {
        cfg.train.flow.enabled = f == OnOff::On;
    }
    if let Some(t) = args.total_steps {
        cfg.total_env_steps = t;
    }
    let stem = args.config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "train".into());
    let out = cli.out.clone().or_else(|| cfg.output_dir()).unwrap_or_else(|| PathBuf::from("runs").join(stem));
    let (snapshot, hash) = config_hash(&cfg)?;
    let mut trainer = Trainer::from_experiment(&cfg)?;
    let metrics_path = out.join(METRICS_FILE);
    let timing_path = out.join(TIMING_FILE);
    let ck_dir = out.join(CHECKPOINT_DIR);

    if args.resume {
        let ck = Checkpoint::load(&ck_dir)?;
        let recorded = ck.meta("config_hash")?;
        if recorded != hash {
            return Err(Error::Config(format!(
                "{} was trained under config hash {recorded}, this config hashes to {hash}",
                out.display()
            )));
        }
        trainer.restore(&ck)?;
        truncate_csv_rows(&metrics_path, trainer.iteration)?;
        truncate_csv_rows(&timing_path, trainer.iteration)?;
        info!("resuming at iteration {} ({} env steps)", trainer.iteration, trainer.env_steps);
    } else if metrics_path.exists() || ck_dir.exists() {
        if !args.overwrite {
            return Err(Error::Config(format!(
                "{} already holds a run; pass --resume to continue it or --overwrite to replace it",
                out.display()
            )));
        }
        for p in [&metrics_path, &timing_path] {
            if p.exists() {
                fs::remove_file(p).map_err(|e| io_err(p, e))?;
            }
        }
        fs::remove_dir_all(&ck_dir).map_err(|e| io_err(&ck_dir, e))?;
    }
    create_dir(&out)?;
    let cfg_path = out.join(CONFIG_FILE);
    fs::write(&cfg_path, &snapshot).map_err(|e| io_err(&cfg_path, e))?;
    let mut manifest = RunManifest::start("train", cfg.seed, Some(hash.clone()));
    for p in [&cfg_path, &metrics_path, &timing_path, &ck_dir] {
        manifest.add(p.as_path());
    }
    manifest.write(&out)?;

    let mut this_run = 0usize;
    let outcome: Result<()> = loop {
        if trainer.env_steps >= cfg.total_env_steps || args.stop_after.is_some_and(|n| this_run >= n) {
            break Ok(());
        }
        let (mut metrics, timing) = match trainer.train_iteration() {
            Ok(v) => v,
            Err(e) => break Err(e),
        };
        this_run += 1;
        let it = trainer.iteration;
        if cfg.eval_every > 0 && it % cfg.eval_every == 0 {
            match trainer.evaluate(cfg.seed) {
                Ok((_, s)) => {
                    metrics.eval_e_joint_deg = Some(s.e_joint_deg);
                    metrics.eval_e_body_m = Some(s.e_body_m);
                    metrics.eval_mean_abs_power = Some(s.mean_abs_power_w);
                }
                Err(e) => break Err(e),
            }
        }
        append_csv_row(&metrics_path, &metrics)?;
        append_csv_row(&timing_path, &timing)?;
        if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 {
            save_checkpoint(&trainer, &ck_dir, &hash)?;
        }
        if it % 10 == 0 || metrics.eval_e_joint_deg.is_some() {
            let eval = metrics.eval_e_joint_deg.map_or(String::new(), |e| format!(", eval E_joint {e:.2} deg"));
            info!(
                "iteration {it}: {} steps, reward {:.3}, rollout E_joint {:.2} deg{eval}, {:.0} steps/s",
                metrics.env_steps, metrics.mean_tracking_reward, metrics.e_joint_deg, timing.sps
            );
        }
    };
    save_checkpoint(&trainer, &ck_dir, &hash)?;
    match outcome {
        Ok(()) => {
            manifest.finish("completed");
            manifest.write(&out)?;
            say(
                cli,
                format!("trained {} iterations ({} env steps) into {}", trainer.iteration, trainer.env_steps, out.display()),
            );
            Ok(())
        }
        Err(e) => {
            manifest.finish(&format!("failed at iteration {}: {e}", trainer.iteration + 1));
            manifest.write(&out)?;
            log::error!("last good state kept in {}", ck_dir.display());
            Err(e)
        }
    }
}

#[derive(Debug, Serialize)]
struct EvalRow {
    episode: usize,
    seed: u64,
    controller: String,
    e_joint_deg: f64,
    e_body_m: f64,
    root_translation_m: f64,
    root_rotation_deg: f64,
    mean_abs_power_w: f64,
    mean_reward: f64,
    steps: usize,
}

impl EvalRow {
    fn new(episode: usize, seed: u64, controller: &str, s: &TrackingSummary) -> Self {
        EvalRow {
            episode,
            seed,
            controller: controller.to_string(),
            e_joint_deg: s.e_joint_deg,
            e_body_m: s.e_body_m,
            root_translation_m: s.root_translation_m,
            root_rotation_deg: s.root_rotation_deg,
            mean_abs_power_w: s.mean_abs_power_w,
            mean_reward: s.mean_reward,
            steps: s.steps,
        }
    }
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let cfg_path = args.config.clone().unwrap_or_else(|| args.run.join(CONFIG_FILE));
    let cfg = ExperimentConfig::load(&cfg_path)?;
    let (_, hash) = config_hash(&cfg)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let episodes = args.episodes.unwrap_or(cfg.eval_episodes);
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    let (spec, reference) = cfg.validate()?;
    let (spec, reference) = (Arc::new(spec), Arc::new(reference));
    let out = out_dir(cli, || args.run.join("eval"))?;
    let mut manifest = RunManifest::start("eval", seed, Some(hash.clone()));
    manifest.write(&out)?;

    let trainer = if args.controller == ControllerKind::Policy {
        let ck_dir = args.checkpoint.clone().unwrap_or_else(|| args.run.join(CHECKPOINT_DIR));
        let ck = Checkpoint::load(&ck_dir)?;
        let recorded = ck.meta("config_hash").unwrap_or("<none>");
        if recorded != hash && !args.allow_config_mismatch {
            return Err(Error::Config(format!(
                "checkpoint {} was recorded under config hash {recorded}, but {} hashes to {hash}; \
                 pass --allow-config-mismatch to evaluate anyway",
                ck_dir.display(),
                cfg_path.display()
            )));
        }
        let mut t = Trainer::new(
            spec.clone(),
            reference.clone(),
            myotrack::learn::TrainConfig { num_envs: 1, ..cfg.train.clone() },
            cfg.env.clone(),
            cfg.reward.clone(),
            cfg.seed,
        )?;
        t.learner.read(&ck)?;
        Some(t)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let s = seed + k as u64;
        let zero = |_: &[f64]| 0.0;
        let (log, summary) = match (&trainer, args.controller) {
            (Some(t), _) => t.evaluate(s)?,
            (None, ControllerKind::Oracle) => {
                let oracle = OracleController::new(&spec, OracleGains::default())?;
                evaluate(spec.clone(), reference.clone(), &cfg.env, &cfg.reward, Controller::Oracle(&oracle), &zero, s)?
            }
            (None, _) => {
                evaluate(spec.clone(), reference.clone(), &cfg.env, &cfg.reward, Controller::Teleport, &zero, s)?
            }
        };
        let path = out.join(format!("episode_{k:03}.csv"));
        log.save(&path)?;
        manifest.add(&path);
        let name = args.controller.name();
        rows.push(EvalRow::new(k, seed + k as u64, name, &summary));
        say(
            cli,
            format!(
                "episode {k}: E_joint {:.3} deg, E_body {:.4} m, root {:.4} m / {:.2} deg, power {:.3} W, {} steps",
                summary.e_joint_deg,
                summary.e_body_m,
                summary.root_translation_m,
                summary.root_rotation_deg,
                summary.mean_abs_power_w,
                summary.steps
            ),
        );
    }
    let summary_path = out.join("summary.csv");
    write_rows(&summary_path, &rows)?;
    manifest.add(&summary_path);
    manifest.finish("completed");
    manifest.write(&out)
}

impl ControllerKind {
    fn name(self) -> &'static str {
        match self {
            ControllerKind::Policy => "policy",
            ControllerKind::Oracle => "oracle",
            ControllerKind::Teleport => "teleport",
        }
    }
}

#[derive(Debug, Serialize)]
struct SpsCsvRow {
    envs: usize,
    steps: u64,
    seconds: f64,
    sps: f64,
}

fn cmd_bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    if !(args.duration > 0.0 && args.duration.is_finite()) {
        return Err(Error::Config(format!("duration must be positive, got {}", args.duration)));
    }
    let spec = ModelSpec::load(&args.model)?;
    let seed = cli.seed.unwrap_or(0);
    let out = out_dir(cli, || PathBuf::from("runs/bench"))?;
    let mut manifest = RunManifest::start("bench", seed, None);
    manifest.write(&out)?;
    let rows = sps_benchmark(&spec, &args.envs, Duration::from_secs_f64(args.duration), seed)?;
    say(cli, format!("{:>6} {:>12} {:>12}", "envs", "steps", "steps/s"));
    for r in &rows {
        say(cli, format!("{:>6} {:>12} {:>12.0}", r.envs, r.steps, r.sps));
    }
    let path = out.join("sps.csv");
    let csv_rows: Vec<SpsCsvRow> =
        rows.iter().map(|r| SpsCsvRow { envs: r.envs, steps: r.steps, seconds: r.seconds, sps: r.sps }).collect();
    write_rows(&path, &csv_rows)?;
    manifest.add(&path);
    manifest.finish("completed");
    manifest.write(&out)
}
