use std::fmt;

use serde::Serialize;

use crate::blocks::{self, BlockError, SourceParams, BESSEL_ALPHA};
use crate::tf::{cascade, RationalTF};

/// 1-based line and column of a token.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl Pos {
    pub fn new(line: usize, column: usize) -> Self {
        Self { line, column }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Nd,
    Ndp,
    Bessel2,
    Bessel,
    Allpass,
    Napass,
    Gain,
}

/// A parameter a block accepts, with its default when optional.
#[derive(Clone, Copy, Debug)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: Option<f64>,
}

const fn required(name: &'static str) -> ParamSpec {
    ParamSpec { name, default: None }
}

const fn optional(name: &'static str, default: f64) -> ParamSpec {
    ParamSpec {
        name,
        default: Some(default),
    }
}

impl BlockKind {
    pub const ALL: [BlockKind; 7] = [
        BlockKind::Nd,
        BlockKind::Ndp,
        BlockKind::Bessel2,
        BlockKind::Bessel,
        BlockKind::Allpass,
        BlockKind::Napass,
        BlockKind::Gain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Nd => "nd",
            BlockKind::Ndp => "ndp",
            BlockKind::Bessel2 => "bessel2",
            BlockKind::Bessel => "bessel",
            BlockKind::Allpass => "allpass",
            BlockKind::Napass => "napass",
            BlockKind::Gain => "gain",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn params(self) -> &'static [ParamSpec] {
        const T: &[ParamSpec] = &[required("T")];
        const NDP: &[ParamSpec] = &[required("T"), required("tau_in"), required("tau_fb")];
        const BESSEL2: &[ParamSpec] = &[required("T"), optional("alpha", BESSEL_ALPHA)];
        const BESSEL: &[ParamSpec] = &[required("m"), required("wc"), optional("alpha", BESSEL_ALPHA)];
        const GAIN: &[ParamSpec] = &[required("k")];
        match self {
            BlockKind::Nd | BlockKind::Allpass | BlockKind::Napass => T,
            BlockKind::Ndp => NDP,
            BlockKind::Bessel2 => BESSEL2,
            BlockKind::Bessel => BESSEL,
            BlockKind::Gain => GAIN,
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One block instance with its parameters in source order.
#[derive(Clone, Debug, Serialize)]
pub struct BlockCall {
    pub kind: BlockKind,
    pub params: Vec<(String, f64)>,
    #[serde(skip)]
    pub pos: Pos,
}

impl PartialEq for BlockCall {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.params == other.params
    }
}

impl BlockCall {
    pub fn new(kind: BlockKind, params: Vec<(&str, f64)>) -> Self {
        Self {
            kind,
            params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            pos: Pos::default(),
        }
    }

    /// Explicit value, else the default.
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params
            .iter()
            .find(|(k, _)| k == name)
            .map(|&(_, v)| v)
            .or_else(|| {
                self.kind
                    .params()
                    .iter()
                    .find(|p| p.name == name)
                    .and_then(|p| p.default)
            })
    }

    fn get(&self, name: &'static str) -> Result<f64, BlockError> {
        self.param(name).ok_or(BlockError::InvalidParameter {
            name,
            value: f64::NAN,
            requirement: "present",
        })
    }

    pub fn to_tf(&self) -> Result<RationalTF, BlockError> {
        match self.kind {
            BlockKind::Nd => blocks::nd(self.get("T")?),
            BlockKind::Ndp => blocks::nd_practical(self.get("T")?, self.get("tau_in")?, self.get("tau_fb")?),
            BlockKind::Bessel2 => blocks::bessel2(self.get("T")?, self.get("alpha")?),
            BlockKind::Bessel => {
                let m = self.get("m")?;
                if m.fract() != 0.0 || !(2.0..=1024.0).contains(&m) {
                    return Err(BlockError::InvalidParameter {
                        name: "m",
                        value: m,
                        requirement: "an even integer >= 2",
                    });
                }
                blocks::bessel_cascade(m as u32, self.get("wc")?, self.get("alpha")?)
            }
            BlockKind::Allpass => blocks::allpass(self.get("T")?),
            BlockKind::Napass => blocks::neg_allpass(self.get("T")?),
            BlockKind::Gain => blocks::gain(self.get("k")?),
        }
    }

    /// Order of the low-pass this block contributes; zero for other blocks.
    pub fn lowpass_order(&self) -> u32 {
        match self.kind {
            BlockKind::Bessel2 => 2,
            BlockKind::Bessel => self.param("m").unwrap_or(0.0) as u32,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Factor {
    Block(BlockCall),
    Group(Expr),
}

/// `factor ^ power`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Term {
    pub factor: Factor,
    pub power: u32,
}

/// Product of terms, in signal order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Expr {
    pub terms: Vec<Term>,
}

impl Expr {
    pub fn block(call: BlockCall) -> Self {
        Self::power(call, 1)
    }

    pub fn power(call: BlockCall, power: u32) -> Self {
        Self {
            terms: vec![Term {
                factor: Factor::Block(call),
                power,
            }],
        }
    }

    pub fn to_tf(&self) -> Result<RationalTF, BlockError> {
        let parts = self
            .terms
            .iter()
            .map(|t| {
                let tf = match &t.factor {
                    Factor::Block(b) => b.to_tf()?,
                    Factor::Group(e) => e.to_tf()?,
                };
                Ok(tf.powi(t.power))
            })
            .collect::<Result<Vec<_>, BlockError>>()?;
        Ok(cascade(&parts))
    }

    /// Visits every block with its total multiplicity (product of enclosing powers).
    pub fn for_each_block(&self, f: &mut impl FnMut(&BlockCall, u32)) {
        self.visit(1, f);
    }

    fn visit(&self, mult: u32, f: &mut impl FnMut(&BlockCall, u32)) {
        for t in &self.terms {
            let m = mult.saturating_mul(t.power);
            match &t.factor {
                Factor::Block(b) => f(b, m),
                Factor::Group(e) => e.visit(m, f),
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub expr: Expr,
    pub tap: Option<String>,
    #[serde(skip)]
    pub pos: Pos,
}

impl PartialEq for Stage {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr && self.tap == other.tap
    }
}

impl Stage {
    pub fn new(expr: Expr, tap: Option<&str>) -> Self {
        Self {
            expr,
            tap: tap.map(str::to_string),
            pos: Pos::default(),
        }
    }
}

/// A pulse source followed by stages in signal order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainSpec {
    pub source: SourceParams,
    pub source_tap: Option<String>,
    pub stages: Vec<Stage>,
    /// Leading comment lines of the file.
    pub description: String,
}

impl ChainSpec {
    pub fn new(source: SourceParams) -> Self {
        Self {
            source,
            source_tap: None,
            stages: Vec::new(),
            description: String::new(),
        }
    }

    pub fn stage(mut self, expr: Expr, tap: Option<&str>) -> Self {
        self.stages.push(Stage::new(expr, tap));
        self
    }

    /// Source-to-output transfer function of all stages.
    pub fn composite(&self) -> Result<RationalTF, BlockError> {
        self.composite_through(self.stages.len())
    }

    /// Transfer function of the first `count` stages.
    pub fn composite_through(&self, count: usize) -> Result<RationalTF, BlockError> {
        let tfs = self.stages[..count]
            .iter()
            .map(|s| s.expr.to_tf())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(cascade(&tfs))
    }
}

/// Shortest text that parses back to the same `f64`.
pub(crate) fn fmt_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:?}")
    }
}

impl fmt::Display for BlockCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}={}", fmt_number(*v))?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " * ")?;
            }
            match &t.factor {
                Factor::Block(b) => write!(f, "{b}")?,
                Factor::Group(e) => write!(f, "({e})")?,
            }
            if t.power != 1 {
                write!(f, "^{}", t.power)?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for ChainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.description.is_empty() {
            for line in self.description.split('\n') {
                if line.is_empty() {
                    writeln!(f, "#")?;
                } else {
                    writeln!(f, "# {line}")?;
                }
            }
        }
        let s = &self.source;
        write!(
            f,
            "source rect(width={}, height={}, t0={})",
            fmt_number(s.t_rec),
            fmt_number(s.height),
            fmt_number(s.t0)
        )?;
        if let Some(tap) = &self.source_tap {
            write!(f, " as {tap}")?;
        }
        writeln!(f)?;
        for stage in &self.stages {
            write!(f, "stage {}", stage.expr)?;
            if let Some(tap) = &stage.tap {
                write!(f, " as {tap}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
