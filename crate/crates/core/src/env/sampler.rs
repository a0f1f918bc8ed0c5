use std::ops::Range;

use rand::Rng;

use crate::{Error, Result};

/// Start-phase distribution that favours phases where episodes fail.
///
/// Each bin keeps an exponential moving average of a failure indicator; the
/// sampling distribution mixes a uniform floor with failure-proportional mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSampler {
    mix: f64,
    decay: f64,
    failure: Vec<f64>,
}

pub const FAILURE_DECAY: f64 = 0.99;

impl PhaseSampler {
    pub fn new(bins: usize, mix: f64) -> Result<Self> {
        Self::with_rates(vec![0.0; bins], mix)
    }

    pub fn with_rates(rates: Vec<f64>, mix: f64) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Config("adaptive sampling needs at least one bin".into()));
        }
        if !(0.0..=1.0).contains(&mix) {
            return Err(Error::Config(format!("adaptive_mix {mix} outside [0, 1]")));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config("failure rates must be finite and non-negative".into()));
        }
        Ok(PhaseSampler { mix, decay: FAILURE_DECAY, failure: rates })
    }

    pub fn bins(&self) -> usize {
        self.failure.len()
    }

    pub fn rates(&self) -> &[f64] {
        &self.failure
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.bins() as f64;
        let total: f64 = self.failure.iter().sum();
        self.failure
            .iter()
            .map(|r| {
                let adaptive = if total > 0.0 { r / total } else { 1.0 / n };
                self.mix / n + (1.0 - self.mix) * adaptive
            })
            .collect()
    }

    pub fn sample_bin(&self, rng: &mut impl Rng) -> usize {
        let p = self.probabilities();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        // Rounding can leave `acc` slightly below 1; fall back to the last bin with mass.
        p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
    }

    /// Folds one episode outcome into the moving average of its start bin.
    pub fn record(&mut self, bin: usize, failed: bool) {
        let x = if failed { 1.0 } else { 0.0 };
        self.failure[bin] = self.decay * self.failure[bin] + (1.0 - self.decay) * x;
    }
}

/// Frames covered by `bin` when `n_start` start frames are split into `bins` bins.
pub fn bin_frames(bin: usize, bins: usize, n_start: usize) -> Range<usize> {
    let lo = bin * n_start / bins;
    let hi = ((bin + 1) * n_start / bins).max(lo + 1);
    lo..hi.min(n_start.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probabilities_have_uniform_floor_and_sum_to_one() {
        let s = PhaseSampler::with_rates(vec![0.0, 0.5, 0.1, 0.0], 0.2).unwrap();
        let p = s.probabilities();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.2 / 4.0 - 1e-15));
    }

    #[test]
    fn concentrated_failure_without_floor_is_deterministic() {
        let s = PhaseSampler::with_rates(vec![0.0, 0.0, 1.0, 0.0, 0.0], 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| s.sample_bin(&mut rng) == 2));
    }

    #[test]
    fn record_is_exponential_average() {
        let mut s = PhaseSampler::new(2, 0.2).unwrap();
        s.record(1, true);
        s.record(1, true);
        assert!((s.rates()[1] - (1.0 - 0.99f64.powi(2))).abs() < 1e-15);
        assert_eq!(s.rates()[0], 0.0);
    }

    #[test]
    fn bins_partition_start_frames() {
        let n = 37;
        let mut covered = vec![0; n];
        for b in 0..8 {
            for f in bin_frames(b, 8, n) {
                covered[f] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }
}
