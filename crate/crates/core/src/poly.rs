//! Real-coefficient polynomials in the Laplace variable `s`.
//!
//! Coefficients are stored in ascending powers: `coeffs[k]` multiplies `s^k`.
//! Trailing (highest-power) zeros are trimmed on construction so the degree is
//! always `len - 1` for a nonzero polynomial.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl From<Vec<f64>> for Polynomial {
    fn from(coeffs: Vec<f64>) -> Self {
        Self::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Self {
        let mut coeffs = coeffs.into();
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// Ascending coefficients; empty for the zero polynomial.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    /// Coefficient of `s^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn eval_real(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `sum |c_k| r^k`, the magnitude scale of the terms at `|s| = r`.
    ///
    /// Used to turn "is this value zero" into a relative question.
    pub fn magnitude_scale(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c.abs())
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect::<Vec<_>>(),
        )
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect::<Vec<_>>())
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::one(), |acc, _| &acc * self)
    }

    /// Polynomial long division, `self = q * divisor + r` with `deg r < deg divisor`.
    ///
    /// # Panics
    ///
    /// Panics if `divisor` is the zero polynomial.
    pub fn div_rem(&self, divisor: &Self) -> (Self, Self) {
        let dd = divisor.degree().expect("polynomial division by the zero polynomial");
        let Some(nd) = self.degree() else {
            return (Self::zero(), Self::zero());
        };
        if nd < dd {
            return (Self::zero(), self.clone());
        }
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; nd - dd + 1];
        for k in (0..=nd - dd).rev() {
            let q = rem[k + dd] / lead;
            quot[k] = q;
            for (j, &d) in divisor.coeffs.iter().enumerate() {
                rem[k + j] -= q * d;
            }
            rem[k + dd] = 0.0;
        }
        rem.truncate(dd);
        (Self::new(quot), Self::new(rem))
    }

    /// All complex roots, with multiplicity.
    ///
    /// Degree one and two use closed forms (the quadratic in its cancellation-free
    /// variant). Higher degrees take the eigenvalues of the companion matrix of the
    /// monic, magnitude-balanced polynomial, followed by Newton polishing on the
    /// original coefficients.
    pub fn roots(&self) -> Vec<Complex64> {
        let Some(degree) = self.degree() else {
            return Vec::new();
        };
        // Roots at the origin are exact; strip them before the numerical path.
        let zeros = self.coeffs.iter().take_while(|&&c| c == 0.0).count();
        let reduced = Polynomial::new(self.coeffs[zeros..].to_vec());
        let mut roots = vec![Complex64::new(0.0, 0.0); zeros];
        match degree - zeros {
            0 => {}
            1 => roots.push(Complex64::new(-reduced.coeffs[0] / reduced.coeffs[1], 0.0)),
            2 => {
                let [r1, r2] = quadratic_roots(reduced.coeffs[2], reduced.coeffs[1], reduced.coeffs[0]);
                roots.push(r1);
                roots.push(r2);
            }
            _ => roots.extend(companion_roots(&reduced).into_iter().map(|r| reduced.polish_root(r))),
        }
        roots
    }

    fn polish_root(&self, mut z: Complex64) -> Complex64 {
        let dp = self.derivative();
        let mut best = self.eval(z).norm();
        for _ in 0..8 {
            let d = dp.eval(z);
            if d.norm() == 0.0 {
                break;
            }
            let next = z - self.eval(z) / d;
            let residual = self.eval(next).norm();
            if !(residual < best) {
                break;
            }
            best = residual;
            z = next;
        }
        z
    }
}

/// Roots of `a s^2 + b s + c`, `a != 0`.
pub(crate) fn quadratic_roots(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return [Complex64::new(0.0, 0.0); 2];
        }
        [Complex64::new(q / a, 0.0), Complex64::new(c / q, 0.0)]
    } else {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a).abs();
        [Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

fn companion_roots(p: &Polynomial) -> Vec<Complex64> {
    let n = p.degree().unwrap_or(0);
    let lead = p.leading();
    // Substitute s = rho z so the constant and leading terms of the monic
    // polynomial in z have unit magnitude.
    let rho = (p.coeffs[0] / lead).abs().powf(1.0 / n as f64);
    let rho = if rho.is_finite() && rho > 0.0 { rho } else { 1.0 };
    let monic: Vec<f64> = (0..n)
        .map(|k| p.coeffs[k] / lead * rho.powi(k as i32 - n as i32))
        .collect();
    let companion = DMatrix::from_fn(n, n, |i, j| {
        if j == n - 1 {
            -monic[i]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().map(|z| z * rho).collect()
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            if !first {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            } else if c < 0.0 {
                write!(f, "-")?;
            }
            first = false;
            let mag = c.abs();
            match k {
                0 => write!(f, "{mag}")?,
                1 => write!(f, "{mag}*s")?,
                _ => write!(f, "{mag}*s^{k}")?,
            }
        }
        Ok(())
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;

    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect::<Vec<_>>())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;

    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self + &(-rhs)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;

    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;

    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

impl Mul for Polynomial {
    type Output = Polynomial;

    fn mul(self, rhs: Polynomial) -> Polynomial {
        &self * &rhs
    }
}

impl Add for Polynomial {
    type Output = Polynomial;

    fn add(self, rhs: Polynomial) -> Polynomial {
        &self + &rhs
    }
}
