//! Uniformly sampled voltage signals.

use std::f64::consts::TAU;

use crate::error::{invalid, Result};

/// A uniformly sampled voltage signal.
///
/// `band_hz` optionally records the highest frequency the producer cares
/// about. Filters use it to refuse signals that are sampled too coarsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    sample_rate: f64,
    samples: Vec<f64>,
    band_hz: Option<f64>,
}

impl Waveform {
    pub fn new(sample_rate: f64, samples: Vec<f64>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(invalid("waveform must contain at least one sample"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            sample_rate,
            samples,
            band_hz: None,
        })
    }

    /// Declares the highest frequency of interest carried by this signal.
    pub fn with_band(mut self, band_hz: f64) -> Self {
        self.band_hz = Some(band_hz);
        self
    }

    pub fn constant(sample_rate: f64, value: f64, len: usize) -> Result<Self> {
        Self::new(sample_rate, vec![value; len])
    }

    /// `offset + amplitude * sin(2π f t)` sampled for `cycles` periods.
    pub fn sine(
        sample_rate: f64,
        freq_hz: f64,
        amplitude: f64,
        offset: f64,
        cycles: f64,
    ) -> Result<Self> {
        if !(freq_hz.is_finite() && freq_hz > 0.0) {
            return Err(invalid(format!(
                "sine frequency must be positive, got {freq_hz}"
            )));
        }
        let len = (cycles * sample_rate / freq_hz).ceil().max(1.0) as usize;
        let step = TAU * freq_hz / sample_rate;
        let samples = (0..len)
            .map(|n| offset + amplitude * (step * n as f64).sin())
            .collect();
        Ok(Self::new(sample_rate, samples)?.with_band(freq_hz))
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn band_hz(&self) -> Option<f64> {
        self.band_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Same sample rate and band, new sample values.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            sample_rate: self.sample_rate,
            samples,
            band_hz: self.band_hz,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let out = Self::new(
            self.sample_rate,
            self.samples.iter().map(|&v| f(v)).collect(),
        )?;
        Ok(Self {
            band_hz: self.band_hz,
            ..out
        })
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Amplitude of the `freq_hz` component over the trailing `window` seconds.
    ///
    /// Least-squares fit of `a sin + b cos + c`, so a DC offset and a
    /// non-integer number of cycles in the window do not bias the result.
    pub fn tone_amplitude(&self, freq_hz: f64, window: f64) -> f64 {
        let n = ((window * self.sample_rate).round() as usize).clamp(1, self.samples.len());
        let start = self.samples.len() - n;
        let step = TAU * freq_hz / self.sample_rate;

        // Normal equations for basis (sin, cos, 1).
        let mut ata = [[0.0f64; 3]; 3];
        let mut atb = [0.0f64; 3];
        for (k, &y) in self.samples[start..].iter().enumerate() {
            let phase = step * (start + k) as f64;
            let basis = [phase.sin(), phase.cos(), 1.0];
            for i in 0..3 {
                atb[i] += basis[i] * y;
                for j in 0..3 {
                    ata[i][j] += basis[i] * basis[j];
                }
            }
        }
        let [a, b, _] = solve3(ata, atb);
        a.hypot(b)
    }
}

fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap_or(col);
        m.swap(col, pivot);
        v.swap(col, pivot);
        if m[col][col] == 0.0 {
            continue;
        }
        for row in col + 1..3 {
            let factor = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (k, cell) in m[row].iter_mut().enumerate().skip(col) {
                *cell -= factor * pivot_row[k];
            }
            v[row] -= factor * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = if m[row][row] == 0.0 {
            0.0
        } else {
            (v[row] - tail) / m[row][row]
        };
    }
    x
}
