//! Text format for describing a pulse source and a cascade of blocks.
//!
//! ```text
//! # two-stage experiment
//! source rect(width=1.5)
//! stage bessel2(T=0.484, alpha=1.268)^2 as input
//! stage nd(T=0.22)^2 as output
//! ```

mod ast;
mod lexer;
mod parser;
mod validate;

use std::fmt;

use serde::Serialize;

pub use ast::{BlockCall, BlockKind, ChainSpec, Expr, Factor, ParamSpec, Pos, Stage, Term};
pub use parser::{parse_chain, parse_expr, MAX_EXPANDED_BLOCKS, MAX_REPEAT};
pub use validate::validate_chain;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// A located message from parsing or validation. Lines and columns are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub severity: Severity,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.column, self.severity, self.message)
    }
}

/// Parses and validates; errors from either step fail the call, warnings are
/// returned with the chain.
pub fn load_chain(text: &str) -> Result<(ChainSpec, Vec<Diagnostic>), Vec<Diagnostic>> {
    let chain = parse_chain(text)?;
    let diags = validate_chain(&chain);
    if diags.iter().any(Diagnostic::is_error) {
        Err(diags)
    } else {
        Ok((chain, diags))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tf::cascade;

    const EXPERIMENT: &str = "source rect(width=1.5)\n\
                              stage bessel2(T=0.484, alpha=1.268)^2 as input\n\
                              stage nd(T=0.22)^2 as output";

    #[test]
    fn experiment_chain() {
        let chain = parse_chain(EXPERIMENT).unwrap();
        assert_eq!(chain.source.t_rec, 1.5);
        assert_eq!(chain.stages.len(), 2);
        assert_eq!(chain.stages[0].tap.as_deref(), Some("input"));
        assert_eq!(chain.stages[1].expr.terms[0].power, 2);
        assert!(validate_chain(&chain).is_empty());
        let tf = chain.composite().unwrap();
        assert!((tf.group_delay(0.0).unwrap() - (2.0 * 0.484 * (3.0 - 1.268) - 0.44)).abs() < 1e-9);
    }

    #[test]
    fn minimal_chain() {
        let chain = parse_chain("source rect(width=1.0)").unwrap();
        assert!(chain.stages.is_empty());
        assert!(validate_chain(&chain).is_empty());
    }

    #[test]
    fn stage_without_source() {
        let d = parse_chain("stage nd(T=0.22)").unwrap_err();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].line, d[0].column), (1, 1));
        assert!(d[0].message.contains("missing source"));
        let d = parse_chain("").unwrap_err();
        assert!(d[0].message.contains("missing source"));
    }

    #[test]
    fn lowpass_order_below_stage_count_warns() {
        let chain = parse_chain("source rect(width=1)\nstage nd(T=0.2)^3\nstage bessel2(T=0.5, alpha=1.268)").unwrap();
        let d = validate_chain(&chain);
        assert!(d.iter().all(|d| d.severity == Severity::Warning));
        assert!(d
            .iter()
            .any(|d| d.message.contains("m = 2") && d.message.contains("n = 3")));
        assert!(d.iter().any(|d| d.message.contains("improper")));
    }

    #[test]
    fn napass_is_an_unstable_error() {
        let chain = parse_chain("source rect(width=1)\nstage bessel2(T=0.5) * napass(T=0.22)").unwrap();
        let d = validate_chain(&chain);
        assert_eq!(d.len(), 1);
        assert!(d[0].is_error());
        assert_eq!((d[0].line, d[0].column), (2, 24));
        assert!(load_chain("source rect(width=1)\nstage napass(T=0.22)").is_err());
    }

    #[test]
    fn improper_tap_warns_even_when_final_is_proper() {
        let chain = parse_chain("source rect(width=1)\nstage nd(T=0.2) as early\nstage bessel(m=2, wc=1)").unwrap();
        let d = validate_chain(&chain);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, 2);
    }

    #[test]
    fn collects_errors_across_statements() {
        let text = "source rect(width=1)\n\
                    stage foo(T=1)\n\
                    stage nd(T=0.2, x=3)\n\
                    stage nd()^0\n\
                    stage nd(T=-1) as a\n\
                    stage gain(k=2) as a\n\
                    stage nd(T=1) )";
        let d = parse_chain(text).unwrap_err();
        let lines: Vec<_> = d.iter().map(|d| d.line).collect();
        assert!(d.iter().all(Diagnostic::is_error));
        for line in 2..=7 {
            assert!(lines.contains(&line), "no diagnostic on line {line}: {d:?}");
        }
    }

    #[test]
    fn source_errors() {
        for text in [
            "source sine(width=1)",
            "source rect()",
            "source rect(width=0)",
            "source rect(width=1, width=2)",
            "source rect(width=1)\nsource rect(width=2)",
            "source rect(width=1) as x\nstage nd(T=1) * bessel(m=2, wc=1) as x",
            "source rect(width=1)\nstage gain(k=1)^2.5",
            "source rect(width=1)\nstage bessel(m=3, wc=1)",
            "source rect(width=1)\nstage gain(k=1)^300",
            "source rect(width=1)\nstage (gain(k=1)^100)^100",
            "source rect(width=1)\nstage nd(T=1) *",
            "source rect(width=1)\nstage nd(T=1e999)",
        ] {
            assert!(parse_chain(text).is_err(), "{text}");
        }
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let text = format!(
            "source rect(width=1)\nstage {}gain(k=1){}",
            "(".repeat(5000),
            ")".repeat(5000)
        );
        assert!(parse_chain(&text).is_err());
    }

    #[test]
    fn round_trip_and_repeat_expansion() {
        let text = "# demo\n#\n# second\nsource rect(width=0.5, t0=1e-3) as src\n\
                    stage (bessel2(T=0.3)^2 * gain(k=-2))^2 * ndp(T=0.2, tau_in=0.002, tau_fb=0.02) as mid\n\
                    stage allpass(T=0.1)";
        let chain = parse_chain(text).unwrap();
        assert_eq!(chain.description, "demo\n\nsecond");
        let again = parse_chain(&chain.to_string()).unwrap();
        assert_eq!(again, chain);

        let a = parse_expr("nd(T=0.2)^3 * bessel2(T=0.5)").unwrap().to_tf().unwrap();
        let b = parse_expr("nd(T=0.2) * nd(T=0.2) * nd(T=0.2) * bessel2(T=0.5)")
            .unwrap()
            .to_tf()
            .unwrap();
        assert!(a.equivalent(&b, 1e-12));
        let c = cascade(&[
            crate::blocks::nd(0.2).unwrap().powi(3),
            crate::blocks::bessel2(0.5, 1.268).unwrap(),
        ]);
        assert!(a.equivalent(&c, 1e-12));
    }

    #[test]
    fn diagnostics_display() {
        let d = parse_expr("nd(T=1) nd").unwrap_err();
        assert_eq!(
            d[0].to_string(),
            "1:9: error: expected `*` or end of expression, found `nd`"
        );
    }
}
