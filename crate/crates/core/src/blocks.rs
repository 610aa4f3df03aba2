//! Circuit blocks as rational transfer functions, the rectangular pulse
//! source, and the multi-stage design rule.
//!
//! Every factory validates its parameters and returns an unnormalized
//! transfer function: a second-order low-pass section keeps its DC gain `α`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::Polynomial;
use crate::tf::{cascade, RationalTF, TfError};
use crate::waveform::{Waveform, WaveformError};

/// `ω_c · T_LP` of the second-order Bessel section.
pub const BESSEL_CUTOFF_FACTOR: f64 = 0.7861;

/// Section gain `α = 1 + R3/R2` giving the Bessel alignment.
pub const BESSEL_ALPHA: f64 = 1.268;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlockError {
    #[error("{name} must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

fn require(name: &'static str, value: f64, ok: bool, requirement: &'static str) -> Result<(), BlockError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(BlockError::InvalidParameter {
            name,
            value,
            requirement,
        })
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), BlockError> {
    require(name, value, value > 0.0, "positive")
}

/// Component-derived constants of one negative-delay stage and its low-pass input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    /// Negative-delay constant `RC`.
    pub t: f64,
    /// Low-pass section constant `R1 C1`.
    pub t_lp: f64,
    pub alpha: f64,
    /// Input corner `R'C` of the noise-suppressed stage.
    pub tau_in: f64,
    /// Feedback corner `RC'` of the noise-suppressed stage.
    pub tau_fb: f64,
}

impl StageParams {
    /// The experimental values: R = 1 MΩ, C = 0.22 µF, R1 = 2.2 MΩ, C1 = 0.22 µF,
    /// R' = 10 kΩ, C' = 22 nF.
    pub fn table_one() -> Self {
        Self {
            t: 1e6 * 0.22e-6,
            t_lp: 2.2e6 * 0.22e-6,
            alpha: BESSEL_ALPHA,
            tau_in: 10e3 * 0.22e-6,
            tau_fb: 1e6 * 22e-9,
        }
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        positive("T", self.t)?;
        positive("T_LP", self.t_lp)?;
        check_alpha(self.alpha)?;
        check_corners(self.t, self.tau_in, self.tau_fb)
    }
}

fn check_alpha(alpha: f64) -> Result<(), BlockError> {
    require("alpha", alpha, alpha > 0.0 && alpha < 3.0, "in (0, 3)")
}

fn check_corners(t: f64, tau_in: f64, tau_fb: f64) -> Result<(), BlockError> {
    // The corners must sit well above the band of interest; T/10 with a
    // rounding allowance so exact component products like 1 MΩ · 22 nF pass.
    let limit = t / 10.0 * (1.0 + 1e-12);
    require("tau_in", tau_in, (0.0..=limit).contains(&tau_in), "in [0, T/10]")?;
    require("tau_fb", tau_fb, (0.0..=limit).contains(&tau_fb), "in [0, T/10]")
}

/// Ideal negative-delay stage `1 + sT`. Improper.
pub fn nd(t: f64) -> Result<RationalTF, BlockError> {
    positive("T", t)?;
    Ok(tf(&[1.0, t], &[1.0]))
}

/// Negative-delay stage with the high-frequency gain capped by the input and
/// feedback corners: `1 + sT / ((1 + s tau_in)(1 + s tau_fb))`.
///
/// Proper (equal degrees); the gain peaks at `1 + T/(tau_in + tau_fb)` at
/// `ω = 1/sqrt(tau_in tau_fb)` and returns to 1 as `ω → ∞`.
pub fn nd_practical(t: f64, tau_in: f64, tau_fb: f64) -> Result<RationalTF, BlockError> {
    positive("T", t)?;
    check_corners(t, tau_in, tau_fb)?;
    let den = &Polynomial::new(vec![1.0, tau_in]) * &Polynomial::new(vec![1.0, tau_fb]);
    let num = &den + &Polynomial::new(vec![0.0, t]);
    Ok(RationalTF::new(num, den).expect("corner product is nonzero"))
}

/// Second-order low-pass section `α / (1 + s T_LP (3 - α) + (s T_LP)^2)`.
pub fn bessel2(t_lp: f64, alpha: f64) -> Result<RationalTF, BlockError> {
    positive("T_LP", t_lp)?;
    check_alpha(alpha)?;
    Ok(tf(&[alpha], &[1.0, t_lp * (3.0 - alpha), t_lp * t_lp]))
}

/// Section constant whose cutoff is `omega_c`, `T_LP = 0.7861 / ω_c`.
pub fn section_time_constant(omega_c: f64) -> f64 {
    BESSEL_CUTOFF_FACTOR / omega_c
}

fn check_order(order_m: u32) -> Result<(), BlockError> {
    require(
        "order m",
        order_m as f64,
        order_m >= 2 && order_m % 2 == 0,
        "an even integer >= 2",
    )
}

/// `m/2` identical sections, each with cutoff `omega_c`.
pub fn bessel_cascade(order_m: u32, omega_c: f64, alpha: f64) -> Result<RationalTF, BlockError> {
    check_order(order_m)?;
    positive("omega_c", omega_c)?;
    let section = bessel2(section_time_constant(omega_c), alpha)?;
    Ok(section.powi(order_m / 2))
}

/// `m/2` identical sections scaled so that the whole cascade is 3 dB down at
/// `omega_c`.
///
/// With `x = ω T_LP` one section has `|H/α|^-2 = 1 + c x² + x⁴`, `c = (3-α)² - 2`;
/// `k` sections are 3 dB down where `(1 + c x² + x⁴)^k = 2`. For `m = 2` and the
/// Bessel `α` this reproduces `T_LP ≈ 0.7861 / ω_c`.
pub fn bessel_cascade_matched(order_m: u32, omega_c: f64, alpha: f64) -> Result<RationalTF, BlockError> {
    check_order(order_m)?;
    positive("omega_c", omega_c)?;
    check_alpha(alpha)?;
    let sections = order_m / 2;
    let c = (3.0 - alpha).powi(2) - 2.0;
    let target = 2f64.powf(1.0 / sections as f64) - 1.0;
    let x2 = 0.5 * (-c + (c * c + 4.0 * target).sqrt());
    let section = bessel2(x2.sqrt() / omega_c, alpha)?;
    Ok(section.powi(sections))
}

/// How a cascade of low-pass sections relates to its nominal cutoff.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffNormalization {
    /// Every section has cutoff `ω_c` ([`bessel_cascade`]).
    PerSection,
    /// The whole cascade has cutoff `ω_c` ([`bessel_cascade_matched`]).
    #[default]
    Cascade,
}

pub fn lowpass(
    order_m: u32,
    omega_c: f64,
    alpha: f64,
    normalization: CutoffNormalization,
) -> Result<RationalTF, BlockError> {
    match normalization {
        CutoffNormalization::PerSection => bessel_cascade(order_m, omega_c, alpha),
        CutoffNormalization::Cascade => bessel_cascade_matched(order_m, omega_c, alpha),
    }
}

/// Positive-delay all-pass `(1 - sT) / (1 + sT)`.
pub fn allpass(t: f64) -> Result<RationalTF, BlockError> {
    positive("T", t)?;
    Ok(tf(&[1.0, -t], &[1.0, t]))
}

/// Time-reversed all-pass `(1 + sT) / (1 - sT)`; its pole sits at `s = +1/T`.
pub fn neg_allpass(t: f64) -> Result<RationalTF, BlockError> {
    positive("T", t)?;
    Ok(tf(&[1.0, t], &[1.0, -t]))
}

pub fn gain(k: f64) -> Result<RationalTF, BlockError> {
    require("k", k, true, "finite")?;
    Ok(RationalTF::gain(k))
}

fn tf(num: &[f64], den: &[f64]) -> RationalTF {
    RationalTF::from_coeffs(num, den).expect("block denominators are nonzero")
}

/// Parameters of an `n`-stage negative-delay cascade designed for an excess-gain
/// budget `gamma` at cutoff `omega_c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub n: u32,
    /// Low-pass order, the smallest even integer `>= n`.
    pub m: u32,
    pub gamma: f64,
    pub omega_c: f64,
    /// Pulse width `1 / ω_c`.
    pub t_w: f64,
    /// Per-stage constant `sqrt(2γ/n) / ω_c`.
    pub t: f64,
    /// Total advance `n T = sqrt(2nγ) T_w`.
    pub t_total: f64,
}

pub fn design_stage(n: u32, gamma: f64, omega_c: f64) -> Result<DesignParams, BlockError> {
    require("n", n as f64, n >= 1, "at least 1")?;
    positive("gamma", gamma)?;
    positive("omega_c", omega_c)?;
    let t_w = 1.0 / omega_c;
    let t = (2.0 * gamma / n as f64).sqrt() * t_w;
    Ok(DesignParams {
        n,
        m: n + n % 2,
        gamma,
        omega_c,
        t_w,
        t,
        t_total: n as f64 * t,
    })
}

/// The budget a given design spends: `γ = n (ω_c T)² / 2`.
pub fn excess_budget(n: u32, t: f64, omega_c: f64) -> f64 {
    n as f64 * (omega_c * t).powi(2) / 2.0
}

/// `|H(iω_c)| - 1`.
pub fn excess_gain(tf: &RationalTF, omega_c: f64) -> Result<f64, TfError> {
    Ok(tf.amplitude(omega_c)? - 1.0)
}

/// `n` ideal stages behind an order-`m` per-section cascade.
pub fn design_chain_tf(design: &DesignParams, alpha: f64) -> Result<RationalTF, BlockError> {
    let lp = bessel_cascade(design.m, design.omega_c, alpha)?;
    Ok(cascade(&[lp, nd(design.t)?.powi(design.n)]))
}

/// Single rectangular pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub t_rec: f64,
    pub height: f64,
    pub t0: f64,
}

impl SourceParams {
    pub fn new(t_rec: f64) -> Self {
        Self {
            t_rec,
            height: 1.0,
            t0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        positive("width", self.t_rec)?;
        require("height", self.height, true, "finite")?;
        require("t0", self.t0, true, "finite")
    }

    /// Default grid start, two pulse widths before the switch-on.
    pub fn default_t_start(&self) -> f64 {
        self.t0 - 2.0 * self.t_rec
    }

    /// `height` on `[t0, t0 + T_rec)`, zero elsewhere.
    pub fn value_at(&self, t: f64, dt: f64) -> f64 {
        // Grid times carry rounding; treat anything within a nanostep of an
        // edge as on the edge.
        let eps = 1e-9 * dt;
        if t >= self.t0 - eps && t < self.t0 + self.t_rec - eps {
            self.height
        } else {
            0.0
        }
    }
}

impl Default for SourceParams {
    fn default() -> Self {
        Self::new(1.5)
    }
}

/// Samples the pulse from [`SourceParams::default_t_start`] to `t_end`.
pub fn rect_source(p: &SourceParams, dt: f64, t_end: f64) -> Result<Waveform, BlockError> {
    rect_source_from(p, p.default_t_start(), dt, t_end)
}

pub fn rect_source_from(p: &SourceParams, t_start: f64, dt: f64, t_end: f64) -> Result<Waveform, BlockError> {
    p.validate()?;
    positive("dt", dt)?;
    require("t_end", t_end, t_end > p.t0 + p.t_rec, "after the pulse ends")?;
    require("t_start", t_start, t_start <= p.t0, "at or before t0")?;
    Ok(Waveform::from_fn(t_start, dt, t_end, |t| p.value_at(t, dt))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tf::Stability;

    #[test]
    fn ideal_stage() {
        let h = nd(0.22).unwrap();
        assert_eq!(h.eval(0.0).unwrap().re, 1.0);
        assert!((h.group_delay(0.0).unwrap() + 0.22).abs() < 1e-15);
        assert!((h.amplitude(1.0 / 0.22).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!(nd(0.0).is_err());
        assert!(nd(-1.0).is_err());
    }

    #[test]
    fn practical_stage_reduces_to_ideal() {
        let ideal = nd(0.22).unwrap();
        let prac = nd_practical(0.22, 0.0, 0.0).unwrap();
        assert!(prac.equivalent(&ideal, 0.0));
        for k in 0..50 {
            let w = k as f64 * 0.7;
            assert!((prac.eval(w).unwrap() - ideal.eval(w).unwrap()).norm() < 1e-14);
        }
    }

    #[test]
    fn practical_stage_dc_delay_is_minus_t() {
        // d/ds log H at 0 is (T + a + b) - (a + b) = T.
        let h = nd_practical(0.22, 2.2e-3, 2.2e-4).unwrap();
        assert!((h.group_delay(0.0).unwrap() + 0.22).abs() < 1e-15);
        let fd = h.group_delay_numeric(0.0, 1e-4).unwrap();
        assert!((fd + 0.22).abs() < 1e-6);
    }

    #[test]
    fn practical_stage_gain_is_bounded() {
        let (t, a, b) = (0.22, 2.2e-3, 2.2e-4);
        let h = nd_practical(t, a, b).unwrap();
        assert!(h.is_proper());
        let w_peak = 1.0 / (a * b).sqrt();
        assert!((h.amplitude(w_peak).unwrap() - (1.0 + t / (a + b))).abs() < 1e-9);
        assert!((h.amplitude(1e9).unwrap() - 1.0).abs() < 1e-3);
        // Unbounded for the ideal stage.
        assert!(nd(t).unwrap().amplitude(1e6).unwrap() > 1e5);
    }

    #[test]
    fn table_one_corners() {
        let p = StageParams::table_one();
        assert!((p.tau_in - 2.2e-3).abs() < 1e-15);
        assert!((p.tau_fb - 2.2e-2).abs() < 1e-15);
        assert!((p.t_lp - 0.484).abs() < 1e-12);
        p.validate().unwrap();
        assert!(nd_practical(0.22, 0.03, 0.0).is_err());
        assert!(nd_practical(0.22, -1e-3, 0.0).is_err());
    }

    #[test]
    fn bessel_section() {
        let h = bessel2(0.484, 1.268).unwrap();
        assert_eq!(h.eval(0.0).unwrap().re, 1.268);
        assert_eq!(h.poles().classification, Stability::Stable);
        assert!(bessel2(0.484, 3.0).is_err());
        assert!(bessel2(0.484, 0.0).is_err());
        assert!((section_time_constant(0.7861 / 0.484) - 0.484).abs() < 1e-15);
    }

    #[test]
    fn bessel_cascade_is_repeated_section() {
        let wc = BESSEL_CUTOFF_FACTOR / 0.484;
        let c = bessel_cascade(4, wc, 1.268).unwrap();
        let b = bessel2(0.484, 1.268).unwrap();
        assert!(c.equivalent(&cascade(&[b.clone(), b]), 1e-14));
        assert!((c.dc_gain().unwrap() - 1.268f64.powi(2)).abs() < 1e-12);
        assert!(bessel_cascade(3, wc, 1.268).is_err());
        assert!(bessel_cascade(0, wc, 1.268).is_err());
    }

    #[test]
    fn matched_cascade_is_three_db_down_at_cutoff() {
        for m in [2, 4, 6, 8, 10] {
            let h = bessel_cascade_matched(m, 1.3, BESSEL_ALPHA).unwrap();
            let rel = h.amplitude(1.3).unwrap() / h.dc_gain().unwrap();
            assert!((rel - 0.5f64.sqrt()).abs() < 1e-12, "m={m}: {rel}");
        }
        // Single section reproduces the 0.7861 constant to its printed precision.
        let h = bessel_cascade_matched(2, 1.0, BESSEL_ALPHA).unwrap();
        let t_lp = h.den().coeff(2).sqrt();
        assert!((t_lp - BESSEL_CUTOFF_FACTOR).abs() < 1e-4);
    }

    #[test]
    fn allpass_pair() {
        let p = allpass(0.22).unwrap();
        let n = neg_allpass(0.22).unwrap();
        for k in 0..20 {
            let w = 0.3 * k as f64;
            assert!((p.amplitude(w).unwrap() - 1.0).abs() < 1e-15);
            assert!((n.amplitude(w).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((p.group_delay(0.0).unwrap() - 0.44).abs() < 1e-15);
        assert!((n.group_delay(0.0).unwrap() + 0.44).abs() < 1e-15);
        let vp = p.poles();
        assert_eq!(vp.classification, Stability::Stable);
        assert!((vp.poles[0].re + 1.0 / 0.22).abs() < 1e-12);
        assert_eq!(n.poles().classification, Stability::Unstable);
    }

    #[test]
    fn design_rule() {
        let d = design_stage(10, 0.2, 1.0).unwrap();
        assert!((d.t - 0.2).abs() < 1e-15);
        assert!((d.t_total - 2.0).abs() < 1e-14);
        assert_eq!(d.m, 10);
        assert_eq!(d.t_w, 1.0);

        let d1 = design_stage(1, 0.2, 1.0).unwrap();
        assert_eq!(d1.t_total, d1.t);
        assert!((d1.t - 0.4f64.sqrt()).abs() < 1e-15);
        assert_eq!(d1.m, 2);
        assert_eq!(design_stage(7, 0.2, 1.0).unwrap().m, 8);

        assert!(design_stage(0, 0.2, 1.0).is_err());
        assert!(design_stage(1, 0.0, 1.0).is_err());
        assert!(design_stage(1, 0.2, -1.0).is_err());
    }

    #[test]
    fn experiment_budget_back_solve() {
        let t = 0.22;
        let gamma = excess_budget(2, t, 0.35 / t);
        assert!((gamma - 0.1225).abs() < 1e-12);
    }

    #[test]
    fn excess_gain_values() {
        assert_eq!(excess_gain(&RationalTF::identity(), 3.0).unwrap(), 0.0);
        let sq = nd(0.22).unwrap().powi(2);
        let g = excess_gain(&sq, 1.59).unwrap();
        assert!((g - (0.22f64 * 1.59).powi(2)).abs() < 1e-12);
        assert!((g - 0.1225).abs() < 1e-3);
    }

    #[test]
    fn rect_pulse_samples() {
        let p = SourceParams::new(1.5);
        let w = rect_source(&p, 1e-3, 5.0).unwrap();
        let at = |t: f64| w.samples()[((t - w.t_start()) / w.dt()).round() as usize];
        assert_eq!(at(0.75), 1.0);
        assert_eq!(at(-0.1), 0.0);
        assert_eq!(at(1.6), 0.0);
        assert_eq!(at(0.0), 1.0);
        assert!((w.integral() - 1.5).abs() <= 1e-3);
        assert!(w.times().zip(w.samples()).all(|(t, &v)| t >= 0.0 || v == 0.0));
        assert!(rect_source(&p, 1e-3, 1.0).is_err());
        assert!(rect_source(&SourceParams::new(0.0), 1e-3, 5.0).is_err());
    }
}
