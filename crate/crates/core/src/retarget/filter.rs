use crate::{Error, Result};

/// Second-order IIR section in transposed direct form II, `a[0] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Second-order Butterworth low-pass, bilinear transform with the cutoff prewarped.
    pub fn butterworth_lowpass(fc: f64, fs: f64) -> Result<Self> {
        if !(fc > 0.0 && fc.is_finite() && fs.is_finite()) {
            return Err(Error::Config(format!("cutoff must be positive and finite, got {fc} Hz")));
        }
        if fs <= 2.0 * fc {
            return Err(Error::Config(format!("sampling rate {fs} Hz must exceed twice the cutoff {fc} Hz")));
        }
        let k = (std::f64::consts::PI * fc / fs).tan();
        let r2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + r2 * k + k * k);
        let b0 = k * k * norm;
        Ok(Biquad { b: [b0, 2.0 * b0, b0], a: [1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - r2 * k + k * k) * norm] })
    }

    /// Filter state that makes a constant input `x0` pass through unchanged.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let y0 = dc * x0;
        let z2 = b2 * x0 - a2 * y0;
        [b1 * x0 - a1 * y0 + z2, z2]
    }

    /// Single causal pass, initialised at steady state on the first sample.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let Some(&x0) = x.first() else { return Vec::new() };
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let [mut z1, mut z2] = self.steady_state(x0);
        x.iter()
            .map(|&v| {
                let y = b0 * v + z1;
                z1 = b1 * v - a1 * y + z2;
                z2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }

    /// Forward then backward pass with odd-reflection padding at both ends.
    pub fn apply_zero_phase(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = 9.min(n - 1);
        let (first, last) = (x[0], x[n - 1]);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
        let mut y = self.apply(&ext);
        y.reverse();
        let mut y = self.apply(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Zero-phase second-order Butterworth low-pass of one channel.
pub fn butterworth_lowpass(signal: &[f64], fc: f64, fs: f64) -> Result<Vec<f64>> {
    Ok(Biquad::butterworth_lowpass(fc, fs)?.apply_zero_phase(signal))
}

/// Applies [`butterworth_lowpass`] to every column of a frame-major series.
pub fn lowpass_columns(series: &[Vec<f64>], fc: f64, fs: f64) -> Result<Vec<Vec<f64>>> {
    let filt = Biquad::butterworth_lowpass(fc, fs)?;
    let dim = series.first().map_or(0, Vec::len);
    let mut out = series.to_vec();
    for c in 0..dim {
        let col: Vec<f64> = series.iter().map(|r| r[c]).collect();
        for (row, v) in out.iter_mut().zip(filt.apply_zero_phase(&col)) {
            row[c] = v;
        }
    }
    Ok(out)
}
