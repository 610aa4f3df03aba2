use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WaveformError {
    #[error("sample step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("waveform has no samples")]
    Empty,
    #[error("waveform grids differ (start {0} vs {1}, step {2} vs {3}, len {4} vs {5})")]
    GridMismatch(f64, f64, f64, f64, usize, usize),
}

/// Uniformly sampled real signal: sample `k` sits at `t_start + k * dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    t_start: f64,
    dt: f64,
    samples: Vec<f64>,
}

impl Waveform {
    pub fn new(t_start: f64, dt: f64, samples: Vec<f64>) -> Result<Self, WaveformError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(WaveformError::InvalidStep(dt));
        }
        if samples.is_empty() {
            return Err(WaveformError::Empty);
        }
        Ok(Self { t_start, dt, samples })
    }

    /// Samples `f(t)` on `t_start, t_start + dt, ...` up to and including `t_end`.
    pub fn from_fn(t_start: f64, dt: f64, t_end: f64, f: impl Fn(f64) -> f64) -> Result<Self, WaveformError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(WaveformError::InvalidStep(dt));
        }
        let n = ((t_end - t_start) / dt + 1e-9).floor() as i64 + 1;
        let n = usize::try_from(n).map_err(|_| WaveformError::Empty)?;
        let samples = (0..n).map(|k| f(t_start + k as f64 * dt)).collect();
        Self::new(t_start, dt, samples)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.samples.len() - 1)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(|k| self.time(k))
    }

    /// Same grid, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), self.samples.len(), "sample count must match grid");
        Self {
            t_start: self.t_start,
            dt: self.dt,
            samples,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.with_samples(self.samples.iter().map(|v| v * k).collect())
    }

    /// Delays the content by `k` samples on the same grid; vacated samples are zero.
    /// Negative `k` advances.
    pub fn shifted(&self, k: isize) -> Self {
        let n = self.samples.len() as isize;
        let samples = (0..n)
            .map(|i| {
                let j = i - k;
                if (0..n).contains(&j) {
                    self.samples[j as usize]
                } else {
                    0.0
                }
            })
            .collect();
        self.with_samples(samples)
    }

    /// Grids agree when start, step and length agree (start and step to 1e-9 of a step).
    pub fn same_grid(&self, other: &Self) -> bool {
        self.samples.len() == other.samples.len()
            && (self.dt - other.dt).abs() <= 1e-9 * self.dt
            && (self.t_start - other.t_start).abs() <= 1e-9 * self.dt
    }

    pub fn check_grid(&self, other: &Self) -> Result<(), WaveformError> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(WaveformError::GridMismatch(
                self.t_start,
                other.t_start,
                self.dt,
                other.dt,
                self.samples.len(),
                other.samples.len(),
            ))
        }
    }

    /// Rectangle-rule integral, `dt * sum`.
    pub fn integral(&self) -> f64 {
        self.dt * self.samples.iter().sum::<f64>()
    }

    /// Linear combination `a * self + b * other` on a shared grid.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self, WaveformError> {
        self.check_grid(other)?;
        Ok(self.with_samples(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    /// `max |self - other| / max |other|`.
    pub fn rel_linf_distance(&self, other: &Self) -> Result<f64, WaveformError> {
        self.check_grid(other)?;
        let diff = self
            .samples
            .iter()
            .zip(&other.samples)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        Ok(diff / other.max_abs())
    }
}
