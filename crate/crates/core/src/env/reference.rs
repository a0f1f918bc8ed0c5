use std::path::Path;

use crate::skeleton::{forward_kinematics, ModelSpec};
use crate::{Error, Result, DT_CTRL};

/// Target motion sampled at the control rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    /// Frame spacing, seconds.
    pub dt: f64,
    pub cyclic: bool,
    pub q: Vec<Vec<f64>>,
    pub dq: Vec<Vec<f64>>,
    /// Key-body world positions per frame.
    pub key_pos: Vec<Vec<[f64; 2]>>,
    /// Key-body world angles per frame.
    pub key_angle: Vec<Vec<f64>>,
    /// Optional measured activation channels in `[0, 1]`, one row per frame.
    pub emg: Option<Vec<Vec<f64>>>,
    /// Optional measured ground reaction channels, newtons.
    pub grf: Option<Vec<Vec<f64>>>,
}

impl ReferenceTrajectory {
    /// Builds a reference from joint trajectories, filling key-body poses by
    /// forward kinematics.
    pub fn from_motion(spec: &ModelSpec, q: Vec<Vec<f64>>, dq: Vec<Vec<f64>>, cyclic: bool) -> Result<Self> {
        if q.len() != dq.len() {
            return Err(Error::Contract(format!("{} position frames but {} velocity frames", q.len(), dq.len())));
        }
        let mut key_pos = Vec::with_capacity(q.len());
        let mut key_angle = Vec::with_capacity(q.len());
        for frame in &q {
            let kin = forward_kinematics(spec, frame)?;
            key_pos.push(kin.key_positions(spec));
            key_angle.push(kin.key_angles(spec));
        }
        let out = ReferenceTrajectory { dt: DT_CTRL, cyclic, q, dq, key_pos, key_angle, emg: None, grf: None };
        out.validate(spec)?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn n_emg(&self) -> usize {
        self.emg.as_ref().map_or(0, |e| e.first().map_or(0, Vec::len))
    }

    /// Checks frame counts, dimensions, the control rate and that the stored
    /// key-body poses agree with forward kinematics of the stored positions.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let t = self.len();
        if t < 2 {
            return Err(Error::Contract(format!("reference needs at least 2 frames, has {t}")));
        }
        if (self.dt - DT_CTRL).abs() > 1e-9 {
            return Err(Error::Contract(format!("reference rate {} s does not match the control step {DT_CTRL} s", self.dt)));
        }
        let lens = [self.dq.len(), self.key_pos.len(), self.key_angle.len()];
        if lens.iter().any(|&l| l != t) {
            return Err(Error::Contract("reference channels have different frame counts".into()));
        }
        for (name, rows) in [("emg", &self.emg), ("grf", &self.grf)] {
            if let Some(rows) = rows {
                if rows.len() != t || rows.iter().any(|r| r.len() != rows[0].len()) {
                    return Err(Error::Contract(format!("reference {name} channels are ragged")));
                }
            }
        }
        if let Some(emg) = &self.emg {
            if emg.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Contract("reference emg values must lie in [0, 1]".into()));
            }
        }
        for f in 0..t {
            if self.q[f].len() != spec.n_q() || self.dq[f].len() != spec.n_q() {
                return Err(Error::Contract(format!("frame {f}: expected {} coordinates", spec.n_q())));
            }
            if self.key_pos[f].len() != spec.n_key() || self.key_angle[f].len() != spec.n_key() {
                return Err(Error::Contract(format!("frame {f}: expected {} key bodies", spec.n_key())));
            }
            let all_finite = self.q[f].iter().chain(&self.dq[f]).chain(&self.key_angle[f]).all(|v| v.is_finite())
                && self.key_pos[f].iter().flatten().all(|v| v.is_finite());
            if !all_finite {
                return Err(Error::Contract(format!("frame {f}: non-finite value")));
            }
            let kin = forward_kinematics(spec, &self.q[f])?;
            for (k, p) in kin.key_positions(spec).iter().enumerate() {
                let d = (p[0] - self.key_pos[f][k][0]).hypot(p[1] - self.key_pos[f][k][1]);
                if d > 1e-6 {
                    return Err(Error::Contract(format!(
                        "frame {f}: key body '{}' is {d:.3e} m from its kinematic position",
                        spec.links[spec.key_bodies[k]].name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Column names in file order.
    pub fn header(&self, spec: &ModelSpec) -> Vec<String> {
        let coords = spec.coord_names();
        let mut h = vec!["time".to_string()];
        h.extend(coords.iter().map(|c| format!("q_{c}")));
        h.extend(coords.iter().map(|c| format!("dq_{c}")));
        for &b in &spec.key_bodies {
            let n = &spec.links[b].name;
            h.push(format!("{n}_x"));
            h.push(format!("{n}_z"));
        }
        h.extend(spec.key_bodies.iter().map(|&b| format!("{}_angle", spec.links[b].name)));
        h.extend((0..self.n_emg()).map(|k| format!("emg_{k}")));
        let n_grf = self.grf.as_ref().map_or(0, |g| g[0].len());
        h.extend((0..n_grf).map(|k| format!("grf_{k}")));
        h
    }

    /// Serializes to CSV with a leading `# cyclic=...` metadata line.
    pub fn to_csv(&self, spec: &ModelSpec) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Contract(format!("csv write: {e}"));
        w.write_record(self.header(spec)).map_err(csv_err)?;
        for f in 0..self.len() {
            let mut row = vec![(f as f64 * self.dt).to_string()];
            row.extend(self.q[f].iter().chain(&self.dq[f]).map(f64::to_string));
            row.extend(self.key_pos[f].iter().flatten().map(f64::to_string));
            row.extend(self.key_angle[f].iter().map(f64::to_string));
            if let Some(e) = &self.emg {
                row.extend(e[f].iter().map(f64::to_string));
            }
            if let Some(g) = &self.grf {
                row.extend(g[f].iter().map(f64::to_string));
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        let body = String::from_utf8(w.into_inner().map_err(|e| Error::Contract(e.to_string()))?)
            .expect("csv output is utf-8");
        Ok(format!("# cyclic={}\n{body}", self.cyclic))
    }

    pub fn save(&self, spec: &ModelSpec, path: &Path) -> Result<()> {
        let text = self.to_csv(spec)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(spec: &ModelSpec, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(spec, &text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => Error::parse(path, other),
        })
    }

    pub fn from_csv(spec: &ModelSpec, text: &str) -> Result<Self> {
        let mut cyclic = false;
        let mut body = text;
        if let Some(rest) = text.strip_prefix('#') {
            let (meta, tail) = rest.split_once('\n').unwrap_or((rest, ""));
            for pair in meta.split_whitespace() {
                match pair.split_once('=') {
                    Some(("cyclic", v)) => {
                        cyclic = v.parse().map_err(|_| Error::parse("<reference>", format!("bad cyclic flag '{v}'")))?
                    }
                    _ => return Err(Error::parse("<reference>", format!("unknown metadata '{pair}'"))),
                }
            }
            body = tail;
        }
        let mut rdr = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::parse("<reference>", e))?
            .iter()
            .map(str::to_string)
            .collect();
        let n_emg = header.iter().filter(|h| h.starts_with("emg_")).count();
        let n_grf = header.iter().filter(|h| h.starts_with("grf_")).count();
        let mut probe = ReferenceTrajectory {
            dt: DT_CTRL,
            cyclic,
            q: vec![],
            dq: vec![],
            key_pos: vec![],
            key_angle: vec![],
            emg: (n_emg > 0).then(|| vec![vec![0.0; n_emg]]),
            grf: (n_grf > 0).then(|| vec![vec![0.0; n_grf]]),
        };
        let expected = probe.header(spec);
        if header != expected {
            let missing: Vec<&String> = expected.iter().filter(|e| !header.contains(e)).collect();
            let extra: Vec<&String> = header.iter().filter(|h| !expected.contains(h)).collect();
            return Err(Error::parse(
                "<reference>",
                format!("header mismatch for model '{}': missing {missing:?}, unexpected {extra:?}", spec.name),
            ));
        }
        probe.emg = (n_emg > 0).then(Vec::new);
        probe.grf = (n_grf > 0).then(Vec::new);
        let (nq, nk) = (spec.n_q(), spec.n_key());
        let mut times = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse("<reference>", e))?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse("<reference>", format!("row {}: {e}", line + 1)))?;
            let mut it = vals.into_iter();
            let mut take = |n: usize| it.by_ref().take(n).collect::<Vec<f64>>();
            times.push(take(1)[0]);
            probe.q.push(take(nq));
            probe.dq.push(take(nq));
            probe.key_pos.push(take(2 * nk).chunks(2).map(|c| [c[0], c[1]]).collect());
            probe.key_angle.push(take(nk));
            if let Some(e) = probe.emg.as_mut() {
                e.push(take(n_emg));
            }
            if let Some(g) = probe.grf.as_mut() {
                g.push(take(n_grf));
            }
        }
        if times.len() >= 2 {
            probe.dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        }
        probe.validate(spec)?;
        Ok(probe)
    }
}
