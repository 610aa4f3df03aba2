//! Driving rational transfer functions with sampled waveforms.
//!
//! Two independent routes are provided so each can check the other:
//!
//! * [`simulate_fft`] multiplies the spectrum of the zero-padded input by
//!   `H(iω_k)` bin by bin. It handles improper functions, provided the input is
//!   already band-limited.
//! * [`simulate_ode`] realizes the (proper) function in controllable canonical
//!   form and integrates it with fixed-step RK4, interpolating the input
//!   linearly between samples.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{rect_source, BlockError};
use crate::dsl::ChainSpec;
use crate::tf::{cascade, RationalTF, Stability};
pub use crate::waveform::{Waveform, WaveformError};

/// Minimum zero-padding factor of the FFT route.
pub const FFT_PAD_FACTOR: usize = 8;

const EDGE_FRACTION: f64 = 0.05;
const EDGE_LEVEL: f64 = 1e-6;
const WRAP_ENERGY_LIMIT: f64 = 1e-6;
const IMAG_RESIDUE_LIMIT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("transfer function has a pole on the imaginary axis at omega = {omega} rad/s")]
    PoleOnAxis { omega: f64 },
    #[error(
        "improper transfer function needs a band-limited input: the first and last 5% of samples \
         must stay below 1e-6 of the peak (found {level:.3e} of peak)"
    )]
    NotBandLimited { level: f64 },
    #[error(
        "output energy in the padding tail is {fraction:.3e} of the total; the response wraps \
         around, extend t_end or the padding"
    )]
    WrapAround { fraction: f64 },
    #[error("inverse transform left an imaginary residue of {ratio:.3e} of the peak")]
    ImaginaryResidue { ratio: f64 },
    #[error(
        "transfer function is improper (numerator degree exceeds denominator degree by {excess}); \
         add low-pass order until it is at least the number of negative-delay stages, or use the \
         fft method"
    )]
    Improper { excess: i64 },
    #[error("transfer function is unstable (pole at {re:+.6} {im:+.6}i rad/s)")]
    Unstable { re: f64, im: f64 },
    #[error("substeps must be at least 1")]
    InvalidSubsteps,
    #[error("tap `{tap}`: {source}")]
    Tap {
        tap: String,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fft,
    #[default]
    Ode,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fft => "fft",
            Method::Ode => "ode",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fft" => Ok(Method::Fft),
            "ode" => Ok(Method::Ode),
            other => Err(format!("unknown method `{other}` (expected fft or ode)")),
        }
    }
}

/// Grid and solver settings shared by chain runs and sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
    pub substeps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 12.0,
            method: Method::Ode,
            substeps: 4,
        }
    }
}

pub fn simulate(tf: &RationalTF, input: &Waveform, method: Method, substeps: usize) -> Result<Waveform, SimError> {
    match method {
        Method::Fft => simulate_fft(tf, input),
        Method::Ode => simulate_ode(tf, input, substeps),
    }
}

/// Frequency-domain response on the input grid.
pub fn simulate_fft(tf: &RationalTF, input: &Waveform) -> Result<Waveform, SimError> {
    if let Some(p) = tf.poles().imaginary_axis_poles().next() {
        return Err(SimError::PoleOnAxis { omega: p.im.abs() });
    }
    let n = input.len();
    let x = input.samples();
    if !tf.is_proper() {
        let peak = input.max_abs();
        let edge = ((n as f64 * EDGE_FRACTION).ceil() as usize).max(1).min(n);
        let level = x[..edge]
            .iter()
            .chain(&x[n - edge..])
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 && level > EDGE_LEVEL * peak {
            return Err(SimError::NotBandLimited { level: level / peak });
        }
    }

    let len = (n * FFT_PAD_FACTOR).next_power_of_two();
    let mut buf: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);

    let bin = 2.0 * PI / (len as f64 * input.dt());
    let half = len / 2;
    for k in 0..=half {
        let omega = k as f64 * bin;
        let h = tf.eval(omega).map_err(|_| SimError::PoleOnAxis { omega })?;
        if k == half {
            // The Nyquist bin is shared by ±ω; keep the spectrum Hermitian.
            buf[k] *= h.re;
        } else {
            buf[k] *= h;
            if k > 0 {
                buf[len - k] *= h.conj();
            }
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;

    let peak = buf.iter().fold(0.0f64, |m, z| m.max(z.re.abs())) * scale;
    let residue = buf.iter().fold(0.0f64, |m, z| m.max(z.im.abs())) * scale;
    if peak > 0.0 && residue > IMAG_RESIDUE_LIMIT * peak {
        return Err(SimError::ImaginaryResidue { ratio: residue / peak });
    }
    let energy = |zs: &[Complex64]| zs.iter().map(|z| z.re * z.re).sum::<f64>();
    let total = energy(&buf);
    if total > 0.0 {
        let fraction = energy(&buf[len - n..]) / total;
        if fraction > WRAP_ENERGY_LIMIT {
            return Err(SimError::WrapAround { fraction });
        }
    }
    Ok(input.with_samples(buf[..n].iter().map(|z| z.re * scale).collect()))
}

/// Fixed-step RK4 response with zero initial state. Rejects improper and
/// unstable functions.
pub fn simulate_ode(tf: &RationalTF, input: &Waveform, substeps: usize) -> Result<Waveform, SimError> {
    check_stable(tf)?;
    integrate(&StateSpace::controllable(tf)?, input, substeps)
}

/// As [`simulate_ode`], but integrates unstable functions too.
pub fn simulate_ode_unstable(tf: &RationalTF, input: &Waveform, substeps: usize) -> Result<Waveform, SimError> {
    integrate(&StateSpace::controllable(tf)?, input, substeps)
}

fn check_stable(tf: &RationalTF) -> Result<(), SimError> {
    let verdict = tf.poles();
    if verdict.classification == Stability::Unstable {
        let p = verdict
            .poles
            .iter()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .expect("unstable verdict has poles");
        return Err(SimError::Unstable { re: p.re, im: p.im });
    }
    Ok(())
}

/// `x' = A x + B u`, `y = C x + D u`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl StateSpace {
    /// Controllable canonical realization of a proper function; the order is
    /// the denominator degree.
    pub fn controllable(tf: &RationalTF) -> Result<Self, SimError> {
        if !tf.is_proper() {
            return Err(SimError::Improper {
                excess: -tf.relative_degree(),
            });
        }
        let den = tf.den();
        let n = den.degree().expect("denominator is nonzero");
        let lead = den.leading();
        let monic = den.scale(1.0 / lead);
        let num = tf.num().scale(1.0 / lead);
        let (q, r) = num.div_rem(&monic);
        let d = q.coeff(0);

        let a = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == n {
                -monic.coeff(j)
            } else if j == i + 1 {
                1.0
            } else {
                0.0
            }
        });
        let mut b = DVector::zeros(n);
        if n > 0 {
            b[n - 1] = 1.0;
        }
        let c = DVector::from_fn(n, |j, _| r.coeff(j));
        Ok(Self { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.b.len()
    }

    /// `C (sI - A)^{-1} B + D` at `s = iω`.
    pub fn transfer(&self, omega: f64) -> Option<Complex64> {
        let n = self.order();
        if n == 0 {
            return Some(Complex64::new(self.d, 0.0));
        }
        let s = Complex64::new(0.0, omega);
        let m = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let rhs = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m.lu().solve(&rhs)?;
        let y = self
            .c
            .iter()
            .zip(x.iter())
            .fold(Complex64::new(0.0, 0.0), |acc, (c, x)| acc + x * *c);
        Some(y + self.d)
    }
}

fn integrate(ss: &StateSpace, input: &Waveform, substeps: usize) -> Result<Waveform, SimError> {
    if substeps == 0 {
        return Err(SimError::InvalidSubsteps);
    }
    let u = input.samples();
    let n = ss.order();
    let mut out = Vec::with_capacity(u.len());
    if n == 0 {
        out.extend(u.iter().map(|v| ss.d * v));
        return Ok(input.with_samples(out));
    }
    let h = input.dt() / substeps as f64;
    let mut x = DVector::<f64>::zeros(n);
    let mut k1 = DVector::zeros(n);
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);
    let mut tmp = DVector::zeros(n);
    let deriv = |x: &DVector<f64>, u: f64, out: &mut DVector<f64>| {
        out.gemv(1.0, &ss.a, x, 0.0);
        out.axpy(u, &ss.b, 1.0);
    };

    out.push(ss.c.dot(&x) + ss.d * u[0]);
    for k in 1..u.len() {
        let (u0, u1) = (u[k - 1], u[k]);
        let at = |frac: f64| u0 + (u1 - u0) * frac;
        for j in 0..substeps {
            let f0 = j as f64 / substeps as f64;
            let fm = (j as f64 + 0.5) / substeps as f64;
            let f1 = (j as f64 + 1.0) / substeps as f64;
            deriv(&x, at(f0), &mut k1);
            tmp.copy_from(&x);
            tmp.axpy(0.5 * h, &k1, 1.0);
            deriv(&tmp, at(fm), &mut k2);
            tmp.copy_from(&x);
            tmp.axpy(0.5 * h, &k2, 1.0);
            deriv(&tmp, at(fm), &mut k3);
            tmp.copy_from(&x);
            tmp.axpy(h, &k3, 1.0);
            deriv(&tmp, at(f1), &mut k4);
            x.axpy(h / 6.0, &k1, 1.0);
            x.axpy(h / 3.0, &k2, 1.0);
            x.axpy(h / 3.0, &k3, 1.0);
            x.axpy(h / 6.0, &k4, 1.0);
        }
        out.push(ss.c.dot(&x) + ss.d * u1);
    }
    Ok(input.with_samples(out))
}

/// Name given to the last node when its stage carries no tap.
pub const OUTPUT_TAP: &str = "output";
/// Name of the source node when the source carries no tap.
pub const SOURCE_TAP: &str = "source";

/// Transfer function from the source to each reported node, in signal order.
///
/// Nodes are the source, every tapped stage, and the final stage (named
/// [`OUTPUT_TAP`] when untapped). A chain without stages reports the source
/// twice, the second time as [`OUTPUT_TAP`].
pub fn chain_taps(chain: &ChainSpec) -> Result<Vec<(String, RationalTF)>, BlockError> {
    let mut taps = vec![(
        chain.source_tap.clone().unwrap_or_else(|| SOURCE_TAP.to_string()),
        RationalTF::identity(),
    )];
    let stage_tfs = chain
        .stages
        .iter()
        .map(|s| s.expr.to_tf())
        .collect::<Result<Vec<_>, _>>()?;
    let last = chain.stages.len().checked_sub(1);
    for (i, stage) in chain.stages.iter().enumerate() {
        let name = match (&stage.tap, Some(i) == last) {
            (Some(name), _) => name.clone(),
            (None, true) => final_name(&taps),
            (None, false) => continue,
        };
        taps.push((name, cascade(&stage_tfs[..=i])));
    }
    if last.is_none() {
        taps.push((final_name(&taps), RationalTF::identity()));
    }
    Ok(taps)
}

fn final_name(taps: &[(String, RationalTF)]) -> String {
    if taps.iter().any(|(n, _)| n == OUTPUT_TAP) {
        "final".to_string()
    } else {
        OUTPUT_TAP.to_string()
    }
}

/// Simulates every reported node of `chain` (see [`chain_taps`]).
pub fn run_chain(chain: &ChainSpec, dt: f64, t_end: f64, method: Method) -> Result<Vec<(String, Waveform)>, SimError> {
    run_chain_with(
        chain,
        &SimConfig {
            dt,
            t_end,
            method,
            ..SimConfig::default()
        },
    )
}

pub fn run_chain_with(chain: &ChainSpec, config: &SimConfig) -> Result<Vec<(String, Waveform)>, SimError> {
    let source = rect_source(&chain.source, config.dt, config.t_end)?;
    chain_taps(chain)?
        .into_par_iter()
        .enumerate()
        .map(|(i, (name, tf))| {
            if i == 0 || tf.equivalent(&RationalTF::identity(), 0.0) {
                return Ok((name, source.clone()));
            }
            match simulate(&tf, &source, config.method, config.substeps) {
                Ok(w) => Ok((name, w)),
                Err(e) => Err(SimError::Tap {
                    tap: name,
                    source: Box::new(e),
                }),
            }
        })
        .collect()
}
