use super::ast::{BlockCall, BlockKind, ChainSpec, Pos};
use super::Diagnostic;
use crate::blocks::{bessel2, section_time_constant, BlockError};
use crate::tf::{Stability, StabilityVerdict};

/// Semantic checks on a parsed chain.
///
/// * warning when the total low-pass order is below the number of `nd` blocks;
/// * warning at every tapped or final stage whose composite is improper;
/// * error at the first stage containing a block with a right-half-plane pole.
pub fn validate_chain(chain: &ChainSpec) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut n = 0u64;
    let mut m = 0u64;
    let mut first_nd: Option<Pos> = None;
    let mut excess = 0i64;
    let mut unstable_reported = false;
    let last = chain.stages.len().saturating_sub(1);

    for (i, stage) in chain.stages.iter().enumerate() {
        let mut unstable: Option<(BlockCall, f64)> = None;
        stage.expr.for_each_block(&mut |b, mult| {
            let mult = mult as u64;
            match b.kind {
                BlockKind::Nd => {
                    n += mult;
                    first_nd.get_or_insert(b.pos);
                }
                BlockKind::Bessel2 | BlockKind::Bessel => m += mult * b.lowpass_order() as u64,
                _ => {}
            }
            let Ok((rel, verdict)) = block_summary(b) else { return };
            excess -= rel * mult as i64;
            if unstable.is_none() && verdict.classification == Stability::Unstable {
                let re = verdict.poles.iter().map(|p| p.re).fold(f64::MIN, f64::max);
                unstable = Some((b.clone(), re));
            }
        });
        if let (Some((b, re)), false) = (&unstable, unstable_reported) {
            diags.push(Diagnostic::error(
                b.pos,
                format!(
                    "composite is unstable: `{}` has a pole at Re(s) = {re:.6} rad/s in the right half plane",
                    b.kind
                ),
            ));
            unstable_reported = true;
        }
        if (stage.tap.is_some() || i == last) && excess > 0 {
            diags.push(Diagnostic::warning(
                stage.pos,
                format!(
                    "composite up to this stage is improper (numerator degree exceeds denominator degree \
                     by {excess}); only the fft method can simulate it"
                ),
            ));
        }
    }
    if m < n {
        diags.push(Diagnostic::warning(
            first_nd.unwrap_or_default(),
            format!(
                "total low-pass order m = {m} is smaller than the number of negative-delay stages n = {n}; \
                 use m >= n"
            ),
        ));
    }
    diags.sort_by_key(|d| (d.line, d.column));
    diags
}

/// Relative degree (`deg D - deg N`) and poles of one block. Bessel cascades are factored
/// through a single section; the others have at most two poles.
fn block_summary(b: &BlockCall) -> Result<(i64, StabilityVerdict), BlockError> {
    match b.kind {
        BlockKind::Bessel => {
            let wc = b.param("wc").unwrap_or(f64::NAN);
            let alpha = b.param("alpha").unwrap_or(f64::NAN);
            let section = bessel2(section_time_constant(wc), alpha)?;
            Ok((b.lowpass_order() as i64, section.poles()))
        }
        _ => {
            let tf = b.to_tf()?;
            Ok((tf.relative_degree(), tf.poles()))
        }
    }
}
