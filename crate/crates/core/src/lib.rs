//! Linear time-invariant models of negative-group-delay circuits.
//!
//! * [`tf`] and [`poly`]: rational transfer functions, group delay, poles.
//! * [`blocks`]: circuit blocks, the pulse source and the stage design rule.
//! * [`timesim`]: FFT and state-space simulation of chains.
//! * [`analysis`]: peak timing, widths, advance, distortion and sweeps.
//! * [`dsl`]: the `.chain` description format.

// `!(x > 0.0)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod blocks;
pub mod dsl;
pub mod poly;
pub mod tf;
pub mod timesim;
pub mod waveform;

use thiserror::Error;

pub use analysis::{AnalysisError, AnalysisReport, PowerLawFit, SweepTable};
pub use blocks::{BlockError, CutoffNormalization, DesignParams, SourceParams, StageParams};
pub use dsl::{ChainSpec, Diagnostic, Severity};
pub use num_complex::Complex64;
pub use poly::Polynomial;
pub use tf::{cascade, RationalTF, Stability, StabilityVerdict, TfError};
pub use timesim::{Method, SimConfig, SimError};
pub use waveform::{Waveform, WaveformError};

/// Any error raised by this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Tf(#[from] TfError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Parse(Vec<Diagnostic>),
}
