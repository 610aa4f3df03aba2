//! Rational transfer functions `H(s) = N(s) / D(s)` evaluated on `s = iω`.
//!
//! Time constants are in seconds and frequencies in rad/s throughout. The
//! phase convention is `φ(ω) = arg H(iω)` and the group delay is
//! `t_d = -dφ/dω`, so a positive delay means the output envelope lags.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Polynomial;

/// Relative size below which `|N(iω)|` or `|D(iω)|` counts as a zero.
const ZERO_TOL: f64 = 1e-12;

/// Real parts within this fraction of `max(1, |p|)` classify as marginal.
pub const MARGINAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TfError {
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("transfer function has a pole at omega = {omega} rad/s")]
    PoleAt { omega: f64 },
    #[error("transfer function has a zero at omega = {omega} rad/s; phase is undefined there")]
    ZeroAt { omega: f64 },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RationalTF {
    num: Polynomial,
    den: Polynomial,
}

impl RationalTF {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, TfError> {
        if den.is_zero() {
            return Err(TfError::ZeroDenominator);
        }
        Ok(Self { num, den })
    }

    /// Ascending-power coefficient lists.
    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self, TfError> {
        Self::new(Polynomial::new(num.to_vec()), Polynomial::new(den.to_vec()))
    }

    pub fn gain(k: f64) -> Self {
        Self {
            num: Polynomial::constant(k),
            den: Polynomial::one(),
        }
    }

    pub fn identity() -> Self {
        Self::gain(1.0)
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    /// `deg N <= deg D`. The zero function is proper.
    pub fn is_proper(&self) -> bool {
        match (self.num.degree(), self.den.degree()) {
            (None, _) => true,
            (Some(n), Some(d)) => n <= d,
            (Some(_), None) => unreachable!("denominator is never zero"),
        }
    }

    /// `deg D - deg N`; negative for improper functions.
    pub fn relative_degree(&self) -> i64 {
        let d = self.den.degree().unwrap_or(0) as i64;
        self.num.degree().map_or(d, |n| d - n as i64)
    }

    pub fn eval_s(&self, s: Complex64) -> Result<Complex64, TfError> {
        let d = self.den.eval(s);
        if d.norm() <= ZERO_TOL * self.den.magnitude_scale(s.norm()) {
            return Err(TfError::PoleAt { omega: s.im });
        }
        Ok(self.num.eval(s) / d)
    }

    /// `H(iω)`.
    pub fn eval(&self, omega: f64) -> Result<Complex64, TfError> {
        self.eval_s(Complex64::new(0.0, omega))
    }

    pub fn amplitude(&self, omega: f64) -> Result<f64, TfError> {
        self.eval(omega).map(|h| h.norm())
    }

    /// Principal-branch phase in `(-π, π]`.
    pub fn phase(&self, omega: f64) -> Result<f64, TfError> {
        self.eval(omega).map(|h| h.arg())
    }

    pub fn dc_gain(&self) -> Result<f64, TfError> {
        self.eval(0.0).map(|h| h.re)
    }

    /// Analytic group delay `-dφ/dω` at `omega0`.
    ///
    /// With `s = iω`, `dφ/dω = Re(N'/N - D'/D)`, evaluated from the
    /// polynomial derivatives.
    pub fn group_delay(&self, omega0: f64) -> Result<f64, TfError> {
        let s = Complex64::new(0.0, omega0);
        let d = self.den.eval(s);
        if d.norm() <= ZERO_TOL * self.den.magnitude_scale(omega0.abs()) {
            return Err(TfError::PoleAt { omega: omega0 });
        }
        let n = self.num.eval(s);
        if n.norm() <= ZERO_TOL * self.num.magnitude_scale(omega0.abs()) {
            return Err(TfError::ZeroAt { omega: omega0 });
        }
        let log_slope = self.num.derivative().eval(s) / n - self.den.derivative().eval(s) / d;
        Ok(-log_slope.re)
    }

    /// Central-difference group delay with step `h`.
    ///
    /// The phase difference is taken as `arg(H(ω+h) / H(ω-h))`, which is the
    /// continuous difference as long as the phase moves by less than π across
    /// the stencil.
    pub fn group_delay_numeric(&self, omega0: f64, h: f64) -> Result<f64, TfError> {
        if !(h > 0.0) {
            return Err(TfError::InvalidStep(h));
        }
        let hi = self.eval(omega0 + h)?;
        let lo = self.eval(omega0 - h)?;
        if hi.norm() == 0.0 {
            return Err(TfError::ZeroAt { omega: omega0 + h });
        }
        if lo.norm() == 0.0 {
            return Err(TfError::ZeroAt { omega: omega0 - h });
        }
        Ok(-(hi / lo).arg() / (2.0 * h))
    }

    /// Unwrapped phase over an increasing frequency sweep.
    pub fn phase_sweep(&self, omegas: &[f64]) -> Result<Vec<f64>, TfError> {
        let raw = omegas.iter().map(|&w| self.phase(w)).collect::<Result<Vec<_>, _>>()?;
        Ok(unwrap_phase(&raw))
    }

    pub fn poles(&self) -> StabilityVerdict {
        StabilityVerdict::from_poles(self.den.roots())
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        self.num.roots()
    }

    /// Equality up to a common scalar: `N1 D2 == N2 D1` coefficient-wise,
    /// relative to the largest cross-product coefficient.
    pub fn equivalent(&self, other: &Self, rel_tol: f64) -> bool {
        let lhs = &self.num * &other.den;
        let rhs = &other.num * &self.den;
        let len = lhs.coeffs().len().max(rhs.coeffs().len());
        let scale = lhs
            .coeffs()
            .iter()
            .chain(rhs.coeffs())
            .fold(0.0f64, |m, c| m.max(c.abs()));
        (0..len).all(|k| (lhs.coeff(k) - rhs.coeff(k)).abs() <= rel_tol * scale)
    }

    pub fn powi(&self, k: u32) -> Self {
        Self {
            num: self.num.pow(k),
            den: self.den.pow(k),
        }
    }
}

impl Mul for &RationalTF {
    type Output = RationalTF;

    fn mul(self, rhs: &RationalTF) -> RationalTF {
        RationalTF {
            num: &self.num * &rhs.num,
            den: &self.den * &rhs.den,
        }
    }
}

impl Mul for RationalTF {
    type Output = RationalTF;

    fn mul(self, rhs: RationalTF) -> RationalTF {
        &self * &rhs
    }
}

impl fmt::Display for RationalTF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}

/// Product of the stages in signal order. No pole-zero cancellation is done;
/// the empty cascade is the identity.
pub fn cascade(tfs: &[RationalTF]) -> RationalTF {
    tfs.iter().fold(RationalTF::identity(), |acc, tf| &acc * tf)
}

/// Nearest-branch continuation of a sequence of wrapped phases.
pub fn unwrap_phase(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in wrapped {
        if let Some(q) = prev {
            let mut d = p + offset - q;
            while d > PI {
                offset -= 2.0 * PI;
                d -= 2.0 * PI;
            }
            while d < -PI {
                offset += 2.0 * PI;
                d += 2.0 * PI;
            }
        }
        let v = p + offset;
        out.push(v);
        prev = Some(v);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Marginal,
    Unstable,
    /// No poles at all (polynomial transfer function).
    Polynomial,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Marginal => "marginal",
            Stability::Unstable => "unstable",
            Stability::Polynomial => "polynomial",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    /// Poles in rad/s, serialized as `[re, im]` pairs.
    pub poles: Vec<Complex64>,
    pub classification: Stability,
}

impl StabilityVerdict {
    pub fn from_poles(poles: Vec<Complex64>) -> Self {
        let classification = classify(&poles);
        Self { poles, classification }
    }

    pub fn is_unstable(&self) -> bool {
        self.classification == Stability::Unstable
    }

    /// Poles with real part inside the marginal band.
    pub fn imaginary_axis_poles(&self) -> impl Iterator<Item = &Complex64> {
        self.poles.iter().filter(|p| on_axis(p))
    }
}

fn on_axis(p: &Complex64) -> bool {
    p.re.abs() <= MARGINAL_TOL * p.norm().max(1.0)
}

fn classify(poles: &[Complex64]) -> Stability {
    if poles.is_empty() {
        return Stability::Polynomial;
    }
    if poles.iter().any(|p| p.re > 0.0 && !on_axis(p)) {
        Stability::Unstable
    } else if poles.iter().any(on_axis) {
        Stability::Marginal
    } else {
        Stability::Stable
    }
}
