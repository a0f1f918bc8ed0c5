use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::skeleton::ModelSpec;
use crate::{Error, Result};

/// Descriptive fields stored next to a rollout log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogMeta {
    pub model: String,
    pub policy: String,
    pub seed: u64,
    pub reward_mode: String,
    /// Control step, s.
    pub dt: f64,
    /// Body weight used to normalize ground reaction forces, N.
    pub body_weight: f64,
    /// Leading generalized coordinates that belong to the root.
    pub root_dofs: usize,
    pub coords: Vec<String>,
    pub key_bodies: Vec<String>,
    pub muscles: Vec<String>,
    /// Links whose contact forces are summed into one channel pair each.
    pub feet: Vec<String>,
    pub n_delta: usize,
}

/// Per-step record of one rollout. Units: radians, m, N, m/s, W.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutLog {
    pub meta: LogMeta,
    pub q: Vec<Vec<f64>>,
    pub dq: Vec<Vec<f64>>,
    pub q_ref: Vec<Vec<f64>>,
    pub key_pos: Vec<Vec<[f64; 2]>>,
    pub key_ref: Vec<Vec<[f64; 2]>>,
    pub act: Vec<Vec<f64>>,
    pub excitation: Vec<Vec<f64>>,
    pub force: Vec<Vec<f64>>,
    /// Fiber velocity, m/s.
    pub fiber_speed: Vec<Vec<f64>>,
    /// Ground reaction `(x, z)` per foot, N.
    pub grf: Vec<Vec<[f64; 2]>>,
    pub reward: Vec<f64>,
    pub tracking_reward: Vec<f64>,
    pub aux_reward: Vec<f64>,
    pub delta: Vec<Vec<f64>>,
}

/// A named per-step channel group of a rollout log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Muscle,
    Joint,
    Grf,
}

impl std::str::FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "muscle" => Ok(Channel::Muscle),
            "joint" => Ok(Channel::Joint),
            "grf" => Ok(Channel::Grf),
            other => Err(Error::Config(format!("unknown channel '{other}' (muscle, joint or grf)"))),
        }
    }
}

impl RolloutLog {
    pub fn new(spec: &ModelSpec, policy: &str, seed: u64, reward_mode: &str, dt: f64, n_delta: usize) -> Self {
        let feet = spec.contact_links().iter().map(|&l| spec.links[l].name.clone()).collect();
        RolloutLog {
            meta: LogMeta {
                model: spec.name.clone(),
                policy: policy.to_string(),
                seed,
                reward_mode: reward_mode.to_string(),
                dt,
                body_weight: spec.body_weight(),
                root_dofs: spec.root_dofs(),
                coords: spec.coord_names(),
                key_bodies: spec.key_bodies.iter().map(|&b| spec.links[b].name.clone()).collect(),
                muscles: spec.muscles.iter().map(|m| m.name.clone()).collect(),
                feet,
                n_delta,
            },
            q: vec![],
            dq: vec![],
            q_ref: vec![],
            key_pos: vec![],
            key_ref: vec![],
            act: vec![],
            excitation: vec![],
            force: vec![],
            fiber_speed: vec![],
            grf: vec![],
            reward: vec![],
            tracking_reward: vec![],
            aux_reward: vec![],
            delta: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Joint-angle series with root coordinates removed.
    pub fn joint_angles(&self) -> Vec<Vec<f64>> {
        self.q.iter().map(|r| r[self.meta.root_dofs..].to_vec()).collect()
    }

    pub fn joint_reference(&self) -> Vec<Vec<f64>> {
        self.q_ref.iter().map(|r| r[self.meta.root_dofs..].to_vec()).collect()
    }

    /// Per-step rows of a channel group; GRF is normalized by body weight.
    pub fn channel(&self, channel: Channel) -> Vec<Vec<f64>> {
        match channel {
            Channel::Muscle => self.act.clone(),
            Channel::Joint => self.joint_angles(),
            Channel::Grf => {
                let bw = if self.meta.body_weight > 0.0 { self.meta.body_weight } else { 1.0 };
                self.grf.iter().map(|r| r.iter().flatten().map(|v| v / bw).collect()).collect()
            }
        }
    }

    /// Vertical ground reaction of foot `foot`, N.
    pub fn vertical_grf(&self, foot: usize) -> Vec<f64> {
        self.grf.iter().map(|r| r[foot][1]).collect()
    }

    pub fn mean_abs_power(&self) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for (f, v) in self.force.iter().zip(&self.fiber_speed) {
            for (a, b) in f.iter().zip(v) {
                total += (a * b).abs();
                n += 1;
            }
        }
        total / n.max(1) as f64
    }

    pub fn header(&self) -> Vec<String> {
        let m = &self.meta;
        let mut h = vec!["step".to_string(), "time".to_string()];
        h.extend(m.coords.iter().map(|c| format!("q_{c}")));
        h.extend(m.coords.iter().map(|c| format!("dq_{c}")));
        h.extend(m.coords.iter().map(|c| format!("qref_{c}")));
        for b in &m.key_bodies {
            h.extend([format!("{b}_x"), format!("{b}_z")]);
        }
        for b in &m.key_bodies {
            h.extend([format!("{b}_ref_x"), format!("{b}_ref_z")]);
        }
        for prefix in ["act", "excitation", "force", "speed"] {
            h.extend(m.muscles.iter().map(|n| format!("{prefix}_{n}")));
        }
        for f in &m.feet {
            h.extend([format!("grf_{f}_x"), format!("grf_{f}_z")]);
        }
        h.extend(["reward", "tracking_reward", "aux_reward"].map(String::from));
        h.extend((0..m.n_delta).map(|k| format!("delta_{k}")));
        h
    }

    fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.toml");
        PathBuf::from(s)
    }

    /// Writes the CSV at `path` and the metadata at `path.meta.toml`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::parse(path, e);
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(self.header()).map_err(csv_err)?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string(), (t as f64 * self.meta.dt).to_string()];
            let mut push = |vals: &mut dyn Iterator<Item = f64>| row.extend(vals.map(|v| v.to_string()));
            push(&mut self.q[t].iter().copied());
            push(&mut self.dq[t].iter().copied());
            push(&mut self.q_ref[t].iter().copied());
            push(&mut self.key_pos[t].iter().flatten().copied());
            push(&mut self.key_ref[t].iter().flatten().copied());
            push(&mut self.act[t].iter().copied());
            push(&mut self.excitation[t].iter().copied());
            push(&mut self.force[t].iter().copied());
            push(&mut self.fiber_speed[t].iter().copied());
            push(&mut self.grf[t].iter().flatten().copied());
            push(&mut [self.reward[t], self.tracking_reward[t], self.aux_reward[t]].into_iter());
            push(&mut self.delta[t].iter().copied());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let meta = toml::to_string(&self.meta).map_err(|e| Error::parse(path, e))?;
        let mp = Self::meta_path(path);
        std::fs::write(&mp, meta).map_err(|e| Error::io(&mp, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mp = Self::meta_path(path);
        let text = std::fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let meta: LogMeta = toml::from_str(&text).map_err(|e| Error::parse(&mp, e))?;
        let mut log = RolloutLog {
            meta,
            q: vec![],
            dq: vec![],
            q_ref: vec![],
            key_pos: vec![],
            key_ref: vec![],
            act: vec![],
            excitation: vec![],
            force: vec![],
            fiber_speed: vec![],
            grf: vec![],
            reward: vec![],
            tracking_reward: vec![],
            aux_reward: vec![],
            delta: vec![],
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
        let header: Vec<String> =
            rdr.headers().map_err(|e| Error::parse(path, e))?.iter().map(str::to_string).collect();
        let expected = log.header();
        if header != expected {
            let missing: Vec<&String> = expected.iter().filter(|e| !header.contains(e)).collect();
            let extra: Vec<&String> = header.iter().filter(|h| !expected.contains(h)).collect();
            return Err(Error::parse(path, format!("log header mismatch: missing {missing:?}, unexpected {extra:?}")));
        }
        let (nq, nk, nm, nf) =
            (log.meta.coords.len(), log.meta.key_bodies.len(), log.meta.muscles.len(), log.meta.feet.len());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 1)))?;
            let mut it = vals.into_iter().skip(2);
            let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
            let pairs = |v: Vec<f64>| v.chunks(2).map(|c| [c[0], c[1]]).collect::<Vec<[f64; 2]>>();
            log.q.push(take(nq));
            log.dq.push(take(nq));
            log.q_ref.push(take(nq));
            log.key_pos.push(pairs(take(2 * nk)));
            log.key_ref.push(pairs(take(2 * nk)));
            log.act.push(take(nm));
            log.excitation.push(take(nm));
            log.force.push(take(nm));
            log.fiber_speed.push(take(nm));
            log.grf.push(pairs(take(2 * nf)));
            let r = take(3);
            log.reward.push(r[0]);
            log.tracking_reward.push(r[1]);
            log.aux_reward.push(r[2]);
            log.delta.push(take(log.meta.n_delta));
        }
        Ok(log)
    }
}
