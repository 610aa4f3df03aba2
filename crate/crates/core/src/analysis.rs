//! Pulse metrology: peak timing, widths, advance, distortion and wavefronts,
//! plus the parameter sweeps built on them.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{self, design_stage, lowpass, nd, rect_source, BlockError, CutoffNormalization, SourceParams};
use crate::tf::{cascade, StabilityVerdict};
use crate::timesim::{simulate, SimConfig, SimError};
use crate::waveform::{Waveform, WaveformError};

/// Threshold used for wavefront detection in reports.
pub const WAVEFRONT_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("waveform has no positive peak")]
    NoPeak,
    #[error("waveform maximum is not unique ({count} samples share it)")]
    FlatPeak { count: usize },
    #[error("waveform maximum lies at the edge of the record (t = {time} s)")]
    PeakAtEdge { time: f64 },
    #[error("pulse is not single-lobed: it dips below half maximum at t = {time} s")]
    MultiLobe { time: f64 },
    #[error("half-maximum crossing lies outside the record")]
    CrossingOutside,
    #[error("threshold fraction must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("power-law fit needs at least two distinct positive abscissae and positive values")]
    FitDomain,
    #[error("`{0}` is empty")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Block(#[from] BlockError),
}

/// Time of the maximum, refined by a parabola through the maximum sample and
/// its neighbours.
pub fn peak_time(w: &Waveform) -> Result<f64, AnalysisError> {
    let y = w.samples();
    let (k, &top) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("waveforms are non-empty");
    let count = y.iter().filter(|&&v| v == top).count();
    if count > 1 {
        return Err(AnalysisError::FlatPeak { count });
    }
    if k == 0 || k + 1 == y.len() {
        return Err(AnalysisError::PeakAtEdge { time: w.time(k) });
    }
    let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
    let curvature = y0 - 2.0 * y1 + y2;
    let offset = if curvature < 0.0 {
        0.5 * (y0 - y2) / curvature
    } else {
        0.0
    };
    Ok(w.time(k) + offset * w.dt())
}

/// Full width at half maximum, each crossing linearly interpolated.
pub fn fwhm(w: &Waveform) -> Result<f64, AnalysisError> {
    let y = w.samples();
    let peak = w.max();
    if !(peak > 0.0) {
        return Err(AnalysisError::NoPeak);
    }
    let half = 0.5 * peak;
    let first = y.iter().position(|&v| v >= half).expect("peak exceeds half");
    let last = y.iter().rposition(|&v| v >= half).expect("peak exceeds half");
    if let Some(gap) = y[first..=last].iter().position(|&v| v < half) {
        return Err(AnalysisError::MultiLobe {
            time: w.time(first + gap),
        });
    }
    if first == 0 || last + 1 == y.len() {
        return Err(AnalysisError::CrossingOutside);
    }
    let rise = crossing(w, first - 1, half);
    let fall = crossing(w, last, half);
    Ok(fall - rise)
}

/// Time where the segment from sample `k` to `k + 1` passes `level`.
fn crossing(w: &Waveform, k: usize, level: f64) -> f64 {
    let y = w.samples();
    let (a, b) = (y[k], y[k + 1]);
    w.time(k) + (level - a) / (b - a) * w.dt()
}

/// Earliest time where `|w|` exceeds `threshold_frac` of its peak magnitude,
/// interpolated on the preceding segment.
pub fn wavefront_time(w: &Waveform, threshold_frac: f64) -> Result<f64, AnalysisError> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(AnalysisError::InvalidThreshold(threshold_frac));
    }
    let peak = w.max_abs();
    if !(peak > 0.0) {
        return Err(AnalysisError::NoPeak);
    }
    let level = threshold_frac * peak;
    let y = w.samples();
    let k = y.iter().position(|v| v.abs() > level).expect("peak exceeds level");
    if k == 0 {
        return Ok(w.t_start());
    }
    let (a, b) = (y[k - 1].abs(), y[k].abs());
    Ok(w.time(k - 1) + (level - a) / (b - a) * w.dt())
}

/// Time at which the pulse first reaches half its peak.
pub fn rise_time(w: &Waveform) -> Result<f64, AnalysisError> {
    wavefront_time(w, 0.5)
}

/// Comparison of an input and an output pulse on the same grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub peak_time_in: f64,
    pub peak_time_out: f64,
    /// `peak_time_in - peak_time_out`; positive when the output leads.
    pub advance: f64,
    pub fwhm_in: f64,
    pub fwhm_out: f64,
    /// `advance / fwhm_in`.
    pub advance_fraction: f64,
    /// Shift-minimized relative RMS difference, see [`distortion`].
    pub distortion: f64,
    /// Delay of the input copy that best matches the output; negative when
    /// the output leads.
    pub best_shift: f64,
    pub wavefront_out: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityVerdict>,
}

pub fn measure_advance(w_in: &Waveform, w_out: &Waveform, normalize: bool) -> Result<AnalysisReport, AnalysisError> {
    w_in.check_grid(w_out)?;
    let (a, b) = if normalize {
        (unit_peak(w_in)?, unit_peak(w_out)?)
    } else {
        (w_in.clone(), w_out.clone())
    };
    let peak_time_in = peak_time(&a)?;
    let peak_time_out = peak_time(&b)?;
    let fwhm_in = fwhm(&a)?;
    let fwhm_out = fwhm(&b)?;
    let advance = peak_time_in - peak_time_out;
    let (distortion, best_shift) = distortion(&a, &b)?;
    Ok(AnalysisReport {
        peak_time_in,
        peak_time_out,
        advance,
        fwhm_in,
        fwhm_out,
        advance_fraction: advance / fwhm_in,
        distortion,
        best_shift,
        wavefront_out: wavefront_time(&b, WAVEFRONT_THRESHOLD)?,
        stability: None,
    })
}

fn unit_peak(w: &Waveform) -> Result<Waveform, AnalysisError> {
    let peak = w.max();
    if !(peak > 0.0) {
        return Err(AnalysisError::NoPeak);
    }
    Ok(w.scaled(1.0 / peak))
}

/// `min over τ of RMS(b(t) - a(t - τ)) / RMS(a)`, with `a` taken as zero
/// outside its record. Returns the minimum and the minimizing `τ` in seconds.
///
/// All integer shifts are scored at once by FFT cross-correlation; the best
/// one is recomputed directly and then refined to a fractional shift within
/// one sample using linear interpolation of `a`.
pub fn distortion(a: &Waveform, b: &Waveform) -> Result<(f64, f64), AnalysisError> {
    a.check_grid(b)?;
    let (x, y) = (a.samples(), b.samples());
    let n = x.len();
    let ex: f64 = x.iter().map(|v| v * v).sum();
    let ey: f64 = y.iter().map(|v| v * v).sum();
    if !(ex > 0.0) {
        return Err(AnalysisError::NoPeak);
    }

    // prefix[j] = sum of x[..j]^2, for the part of `a` still inside the record.
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v * v);
    }
    let corr = cross_correlation(x, y);
    let mut best = (f64::INFINITY, 0isize);
    for k in -(n as isize - 1)..=(n as isize - 1) {
        // Overlap: t in [max(0,k), min(n, n+k)), j = t - k in [max(0,-k), min(n, n-k)).
        let lo = (-k).max(0) as usize;
        let hi = (n as isize - k).min(n as isize) as usize;
        let c = corr[k.rem_euclid(corr.len() as isize) as usize];
        let e = ey + (prefix[hi] - prefix[lo]) - 2.0 * c;
        if e < best.0 {
            best = (e, k);
        }
    }
    let k = best.1;
    let grid = shifted_error(x, y, k as f64);
    let (lo, hi) = (k as f64 - 1.0, k as f64 + 1.0);
    let (tau, refined) = golden_min(|s| shifted_error(x, y, s), lo, hi, 1e-6);
    let (err, shift) = if grid <= refined {
        (grid, k as f64)
    } else {
        (refined, tau)
    };
    Ok(((err.max(0.0) / ex).sqrt(), shift * a.dt()))
}

/// `c[k] = sum_t y[t] x[t - k]`, index `k` taken modulo the buffer length.
fn cross_correlation(x: &[f64], y: &[f64]) -> Vec<f64> {
    let len = (2 * x.len()).next_power_of_two();
    let load = |v: &[f64]| -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        for (b, &s) in buf.iter_mut().zip(v) {
            b.re = s;
        }
        buf
    };
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let (mut fx, mut fy) = (load(x), load(y));
    fwd.process(&mut fx);
    fwd.process(&mut fy);
    let mut prod: Vec<Complex64> = fy.iter().zip(&fx).map(|(a, b)| a * b.conj()).collect();
    planner.plan_fft_inverse(len).process(&mut prod);
    prod.iter().map(|z| z.re / len as f64).collect()
}

/// `sum_t (y[t] - x(t - s))^2`, `x` interpolated linearly and zero outside.
fn shifted_error(x: &[f64], y: &[f64], s: f64) -> f64 {
    let n = x.len();
    let base = s.floor();
    let frac = s - base;
    let base = base as isize;
    let at = |j: isize| if j >= 0 && (j as usize) < n { x[j as usize] } else { 0.0 };
    y.iter()
        .enumerate()
        .map(|(t, &yt)| {
            let j = t as isize - base;
            // x(t - s) between samples j - 1 and j.
            let v = if frac == 0.0 {
                at(j)
            } else {
                at(j) * (1.0 - frac) + at(j - 1) * frac
            };
            (yt - v).powi(2)
        })
        .sum()
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Least-squares line through `(ln x, ln y)`: `y ≈ prefactor · x^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerLawFit, AnalysisError> {
    if x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(AnalysisError::FitDomain);
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(AnalysisError::FitDomain);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(PowerLawFit {
        exponent,
        prefactor: intercept.exp(),
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: u32,
    pub t: f64,
    pub t_total_predicted: f64,
    pub advance_measured: f64,
    pub distortion: f64,
    pub fwhm_in: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub gamma: f64,
    pub omega_c: f64,
    /// Low-pass order shared by every row.
    pub m: u32,
    pub rows: Vec<SweepRow>,
    /// Fit of advance against `n`; absent with fewer than two distinct `n`.
    pub fit: Option<PowerLawFit>,
}

impl SweepTable {
    pub fn distortion_ratio(&self) -> f64 {
        let d = self.rows.iter().map(|r| r.distortion);
        let max = d.clone().fold(f64::MIN, f64::max);
        let min = d.fold(f64::MAX, f64::min);
        max / min
    }
}

/// Designs, simulates and measures an `n`-stage cascade for every `n`.
///
/// All rows share one low-pass, of the smallest even order not below the
/// largest `n`, so they see the same filtered pulse. The reference waveform
/// is the low-pass output; the measured one adds the `n` stages.
pub fn scaling_sweep(
    n_values: &[u32],
    gamma: f64,
    omega_c: f64,
    source: &SourceParams,
    config: &SimConfig,
) -> Result<SweepTable, AnalysisError> {
    let max_n = *n_values.iter().max().ok_or(AnalysisError::EmptyInput("n_values"))?;
    let m = design_stage(max_n, gamma, omega_c)?.m;
    let lp = blocks::bessel_cascade(m, omega_c, blocks::BESSEL_ALPHA)?;
    let input = rect_source(source, config.dt, config.t_end)?;
    let reference = simulate(&lp, &input, config.method, config.substeps)?;

    let rows = n_values
        .par_iter()
        .map(|&n| {
            let design = design_stage(n, gamma, omega_c)?;
            let chain = cascade(&[lp.clone(), nd(design.t)?.powi(n)]);
            let out = simulate(&chain, &input, config.method, config.substeps)?;
            let report = measure_advance(&reference, &out, true)?;
            Ok(SweepRow {
                n,
                t: design.t,
                t_total_predicted: design.t_total,
                advance_measured: report.advance,
                distortion: report.distortion,
                fwhm_in: report.fwhm_in,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;

    let mut distinct: Vec<u32> = n_values.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let fit = if distinct.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.advance_measured).collect();
        Some(fit_power_law(&x, &y)?)
    } else {
        None
    };
    Ok(SweepTable {
        gamma,
        omega_c,
        m,
        rows,
        fit,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub m: u32,
    /// Time the response first reaches half its peak, from the pulse switch-on.
    pub rise_delay_50pct: f64,
    pub fwhm: f64,
    pub peak_time: f64,
}

/// Responses of Bessel low-passes of several orders to a unit rectangle of
/// width `width` starting at `t = 0`.
pub fn bessel_order_study(
    orders: &[u32],
    omega_c: f64,
    width: f64,
    normalization: CutoffNormalization,
    config: &SimConfig,
) -> Result<Vec<OrderRow>, AnalysisError> {
    if orders.is_empty() {
        return Err(AnalysisError::EmptyInput("orders"));
    }
    let source = SourceParams::new(width);
    let input = rect_source(&source, config.dt, config.t_end)?;
    orders
        .par_iter()
        .map(|&m| {
            let lp = lowpass(m, omega_c, blocks::BESSEL_ALPHA, normalization)?;
            let y = simulate(&lp, &input, config.method, config.substeps)?;
            Ok(OrderRow {
                m,
                rise_delay_50pct: rise_time(&y)? - source.t0,
                fwhm: fwhm(&y)?,
                peak_time: peak_time(&y)?,
            })
        })
        .collect()
}

/// `max / min - 1` of the widths in a study.
pub fn fwhm_spread(rows: &[OrderRow]) -> f64 {
    let max = rows.iter().map(|r| r.fwhm).fold(f64::MIN, f64::max);
    let min = rows.iter().map(|r| r.fwhm).fold(f64::MAX, f64::min);
    max / min - 1.0
}
