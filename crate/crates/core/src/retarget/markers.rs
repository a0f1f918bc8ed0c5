use std::path::Path;

use crate::skeleton::ModelSpec;
use crate::{Error, Result};

/// Recorded marker positions, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerTrajectory {
    /// Sampling rate, Hz.
    pub rate: f64,
    pub names: Vec<String>,
    /// `frames[t][m]` is the world position of marker `m` at frame `t`.
    pub frames: Vec<Vec<[f64; 2]>>,
}

impl MarkerTrajectory {
    pub fn new(rate: f64, names: Vec<String>, frames: Vec<Vec<[f64; 2]>>) -> Result<Self> {
        let out = MarkerTrajectory { rate, names, frames };
        out.validate()?;
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Contract(format!("marker rate must be positive, got {}", self.rate)));
        }
        for (i, n) in self.names.iter().enumerate() {
            if self.names[..i].contains(n) {
                return Err(Error::Contract(format!("duplicate marker '{n}'")));
            }
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.len() != self.names.len() {
                return Err(Error::Contract(format!(
                    "frame {t} has {} markers, expected {}",
                    f.len(),
                    self.names.len()
                )));
            }
        }
        Ok(())
    }

    /// Column of each model marker in this trajectory.
    pub fn columns_for(&self, spec: &ModelSpec) -> Result<Vec<usize>> {
        let mut missing = Vec::new();
        let cols: Vec<usize> = spec
            .markers
            .iter()
            .filter_map(|m| {
                let c = self.names.iter().position(|n| *n == m.name);
                if c.is_none() {
                    missing.push(m.name.clone());
                }
                c
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::Contract(format!("marker trajectory lacks model markers {missing:?}")));
        }
        if spec.markers.is_empty() {
            return Err(Error::Contract(format!("model '{}' defines no markers", spec.name)));
        }
        Ok(cols)
    }

    /// Targets for the model markers at frame `t`, in model marker order.
    pub fn targets(&self, cols: &[usize], t: usize) -> Vec<[f64; 2]> {
        cols.iter().map(|&c| self.frames[t][c]).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Contract(format!("csv write: {e}"));
        let mut header = vec!["time".to_string()];
        for n in &self.names {
            header.push(format!("{n}_x"));
            header.push(format!("{n}_z"));
        }
        w.write_record(&header).map_err(csv_err)?;
        for (t, f) in self.frames.iter().enumerate() {
            let mut row = vec![(t as f64 / self.rate).to_string()];
            row.extend(f.iter().flatten().map(f64::to_string));
            w.write_record(&row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let src = "<markers>";
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> =
            rdr.headers().map_err(|e| Error::parse(src, e))?.iter().map(|s| s.trim().to_string()).collect();
        if header.first().map(String::as_str) != Some("time") || header.len() % 2 != 1 || header.len() < 3 {
            return Err(Error::parse(src, "expected columns time, <name>_x, <name>_z, ..."));
        }
        let mut names = Vec::new();
        for pair in header[1..].chunks(2) {
            match (pair[0].strip_suffix("_x"), pair[1].strip_suffix("_z")) {
                (Some(a), Some(b)) if a == b => names.push(a.to_string()),
                _ => return Err(Error::parse(src, format!("columns '{}', '{}' are not an x/z pair", pair[0], pair[1]))),
            }
        }
        let mut times = Vec::new();
        let mut frames = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(src, e))?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(src, format!("row {}: {e}", line + 1)))?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(src, format!("row {}: missing or non-finite value", line + 1)));
            }
            times.push(vals[0]);
            frames.push(vals[1..].chunks(2).map(|c| [c[0], c[1]]).collect());
        }
        if times.len() < 2 {
            return Err(Error::parse(src, "need at least two frames to infer the sampling rate"));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::parse(src, "time column must increase"));
        }
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 {
                return Err(Error::parse(src, format!("non-uniform sampling at row {}", k + 2)));
            }
        }
        Self::new(1.0 / dt, names, frames).map_err(|e| Error::parse(src, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path, message),
            other => Error::parse(path, other),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_csv()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
