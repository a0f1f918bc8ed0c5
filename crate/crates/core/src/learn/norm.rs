use crate::error::ensure_dim;
use crate::Result;

const CLIP: f64 = 10.0;

/// Running per-dimension mean and variance of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean.
    pub m2: Vec<f64>,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        RunningNorm { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges a row-major batch into the statistics.
    pub fn update(&mut self, rows: &[f64]) -> Result<()> {
        let d = self.dim();
        ensure_dim!(rows.len() % d.max(1), 0, "normalizer batch remainder");
        let n = (rows.len() / d) as f64;
        if n == 0.0 {
            return Ok(());
        }
        let mut bmean = vec![0.0; d];
        for row in rows.chunks(d) {
            for (m, v) in bmean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut bm2 = vec![0.0; d];
        for row in rows.chunks(d) {
            for ((s, v), m) in bm2.iter_mut().zip(row).zip(&bmean) {
                *s += (v - m) * (v - m);
            }
        }
        let total = self.count + n;
        for i in 0..d {
            let delta = bmean[i] - self.mean[i];
            self.mean[i] += delta * n / total;
            self.m2[i] += bm2[i] + delta * delta * self.count * n / total;
        }
        self.count = total;
        Ok(())
    }

    pub fn std(&self) -> Vec<f64> {
        if self.count < 2.0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|s| (s / self.count + 1e-8).sqrt()).collect()
    }

    /// Standardizes a row-major batch, clipping to ±10.
    pub fn apply(&self, rows: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let std = self.std();
        rows.iter()
            .enumerate()
            .map(|(i, v)| ((v - self.mean[i % d]) / std[i % d]).clamp(-CLIP, CLIP))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_batches_match_direct_statistics() {
        let data: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64 * 0.3 - 1.0).collect();
        let mut a = RunningNorm::new(2);
        a.update(&data[..10]).unwrap();
        a.update(&data[10..26]).unwrap();
        a.update(&data[26..]).unwrap();
        let mut b = RunningNorm::new(2);
        b.update(&data).unwrap();
        for i in 0..2 {
            assert!((a.mean[i] - b.mean[i]).abs() < 1e-12);
            assert!((a.m2[i] - b.m2[i]).abs() < 1e-10);
            let col: Vec<f64> = data.iter().skip(i).step_by(2).copied().collect();
            let mean = col.iter().sum::<f64>() / 20.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0;
            assert!((a.std()[i] - (var + 1e-8).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_normalizer_is_identity() {
        let n = RunningNorm::new(3);
        assert_eq!(n.apply(&[1.0, -2.0, 3.0]), vec![1.0, -2.0, 3.0]);
    }
}
