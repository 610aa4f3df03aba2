use std::collections::HashSet;

use super::ast::{BlockCall, BlockKind, ChainSpec, Expr, Factor, Pos, Stage, Term};
use super::lexer::{lex, Tok, Token};
use super::{Diagnostic, Severity};
use crate::blocks::SourceParams;

/// Largest accepted `^k`.
pub const MAX_REPEAT: u32 = 256;
/// Largest number of blocks one stage may expand to.
pub const MAX_EXPANDED_BLOCKS: u32 = 4096;
const MAX_NESTING: usize = 64;

const KEYWORDS: [&str; 3] = ["source", "stage", "as"];

/// Parses a chain description.
///
/// On failure every diagnostic found is returned, sorted by position; the
/// parser resynchronizes at the next `source` or `stage` keyword.
pub fn parse_chain(text: &str) -> Result<ChainSpec, Vec<Diagnostic>> {
    let (tokens, lex_diags) = lex(text);
    let mut p = Parser::new(tokens, lex_diags);
    let mut source: Option<(SourceParams, Option<String>)> = None;
    let mut stages = Vec::new();
    let mut taps = HashSet::new();
    let mut missing_reported = false;

    loop {
        let pos = p.pos();
        match p.peek().clone() {
            Tok::Eof => break,
            Tok::Ident(kw) if kw == "source" => {
                p.bump();
                match p.source_body() {
                    Ok((params, tap)) => {
                        if source.is_some() {
                            p.error(pos, "duplicate source; a chain has exactly one source");
                        } else if !stages.is_empty() {
                            p.error(pos, "the source must come before all stages");
                        } else {
                            if let Some((name, _)) = &tap {
                                taps.insert(name.clone());
                            }
                            source = Some((params, tap.map(|t| t.0)));
                        }
                    }
                    Err(()) => p.recover(),
                }
            }
            Tok::Ident(kw) if kw == "stage" => {
                if source.is_none() && !missing_reported {
                    p.error(pos, "missing source: a chain must start with `source rect(...)`");
                    missing_reported = true;
                }
                p.bump();
                match p.stage_body() {
                    Ok((mut stage, tap_pos)) => {
                        if let (Some(name), Some(tp)) = (&stage.tap, tap_pos) {
                            if !taps.insert(name.clone()) {
                                p.error(tp, format!("duplicate tap name `{name}`"));
                            }
                        }
                        stage.pos = pos;
                        stages.push(stage);
                    }
                    Err(()) => p.recover(),
                }
            }
            other => {
                p.error(pos, format!("expected `source` or `stage`, found {}", other.describe()));
                p.bump();
                p.recover();
            }
        }
    }
    if source.is_none() && !missing_reported {
        p.error(
            Pos::new(1, 1),
            "missing source: a chain must start with `source rect(...)`",
        );
    }

    let diags = p.finish();
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(diags);
    }
    let (params, source_tap) = source.expect("missing source is an error");
    Ok(ChainSpec {
        source: params,
        source_tap,
        stages,
        description: leading_comments(text),
    })
}

/// Parses a bare stage expression such as `bessel2(T=0.5)^2 * nd(T=0.2)`.
pub fn parse_expr(text: &str) -> Result<Expr, Vec<Diagnostic>> {
    let (tokens, lex_diags) = lex(text);
    let mut p = Parser::new(tokens, lex_diags);
    let expr = p.expr();
    if expr.is_ok() && *p.peek() != Tok::Eof {
        let pos = p.pos();
        let found = p.peek().describe();
        p.error(pos, format!("expected `*` or end of expression, found {found}"));
    }
    let diags = p.finish();
    match expr {
        Ok(e) if diags.is_empty() => Ok(e),
        _ => Err(diags),
    }
}

fn leading_comments(text: &str) -> String {
    let mut lines = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let Some(rest) = t.strip_prefix('#') else {
            break;
        };
        lines.push(rest.strip_prefix(' ').unwrap_or(rest).trim_end());
    }
    lines.join("\n")
}

type Parsed<T> = Result<T, ()>;

struct Parser {
    tokens: Vec<Token>,
    i: usize,
    diags: Vec<Diagnostic>,
    depth: usize,
}

impl Parser {
    fn new(tokens: Vec<Token>, diags: Vec<Diagnostic>) -> Self {
        Self {
            tokens,
            i: 0,
            diags,
            depth: 0,
        }
    }

    fn finish(mut self) -> Vec<Diagnostic> {
        self.diags.sort_by_key(|d| (d.line, d.column));
        self.diags
    }

    fn peek(&self) -> &Tok {
        &self.tokens[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.i].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.i].clone();
        if self.i + 1 < self.tokens.len() {
            self.i += 1;
        }
        t
    }

    fn error(&mut self, pos: Pos, message: impl Into<String>) {
        self.diags.push(Diagnostic::error(pos, message));
    }

    /// Reports "expected X, found Y" at the current token.
    fn fail<T>(&mut self, expected: &str) -> Parsed<T> {
        let pos = self.pos();
        let found = self.peek().describe();
        self.error(pos, format!("expected {expected}, found {found}"));
        Err(())
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Parsed<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(expected)
        }
    }

    fn at_keyword(&self) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == "source" || s == "stage")
    }

    fn recover(&mut self) {
        while *self.peek() != Tok::Eof && !self.at_keyword() {
            self.bump();
        }
    }

    fn end_of_statement(&mut self) -> Parsed<()> {
        if *self.peek() == Tok::Eof || self.at_keyword() {
            Ok(())
        } else {
            self.fail("`*`, `as`, or end of statement")
        }
    }

    fn ident(&mut self, expected: &str) -> Parsed<(String, Pos)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok((s, pos))
            }
            _ => self.fail(expected),
        }
    }

    fn tap(&mut self) -> Parsed<Option<(String, Pos)>> {
        if !matches!(self.peek(), Tok::Ident(s) if s == "as") {
            return Ok(None);
        }
        self.bump();
        let (name, pos) = self.ident("a tap name after `as`")?;
        if KEYWORDS.contains(&name.as_str()) {
            self.error(pos, format!("`{name}` is a keyword and cannot name a tap"));
        }
        Ok(Some((name, pos)))
    }

    fn kvpairs(&mut self) -> Parsed<Vec<(String, f64, Pos)>> {
        self.expect(Tok::LParen, "`(`")?;
        let mut out: Vec<(String, f64, Pos)> = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
            return Ok(out);
        }
        loop {
            let (key, pos) = self.ident("a parameter name")?;
            self.expect(Tok::Eq, "`=` after the parameter name")?;
            let value = match *self.peek() {
                Tok::Number(v) => {
                    self.bump();
                    v
                }
                _ => return self.fail("a number"),
            };
            if out.iter().any(|(k, _, _)| *k == key) {
                self.error(pos, format!("duplicate parameter `{key}`"));
            } else {
                out.push((key, value, pos));
            }
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    return Ok(out);
                }
                _ => return self.fail("`,` or `)`"),
            }
        }
    }

    fn source_body(&mut self) -> Parsed<(SourceParams, Option<(String, Pos)>)> {
        let (kind, kind_pos) = self.ident("a source kind")?;
        if kind != "rect" {
            self.error(kind_pos, format!("unknown source kind `{kind}` (expected `rect`)"));
            return Err(());
        }
        let pairs = self.kvpairs()?;
        let tap = self.tap()?;
        self.end_of_statement()?;

        let mut params = SourceParams::new(f64::NAN);
        let mut width_seen = false;
        for (key, value, pos) in pairs {
            match key.as_str() {
                "width" => {
                    params.t_rec = value;
                    width_seen = true;
                }
                "height" => params.height = value,
                "t0" => params.t0 = value,
                _ => self.error(
                    pos,
                    format!("unknown parameter `{key}` for `rect` (expected width, height, t0)"),
                ),
            }
        }
        if !width_seen {
            self.error(kind_pos, "missing parameter `width` for `rect`");
            return Err(());
        }
        if let Err(e) = params.validate() {
            self.error(kind_pos, format!("invalid source: {e}"));
        }
        Ok((params, tap))
    }

    fn stage_body(&mut self) -> Parsed<(Stage, Option<Pos>)> {
        let start = self.pos();
        let expr = self.expr()?;
        let tap = self.tap()?;
        self.end_of_statement()?;
        let mut total = 0u32;
        expr.for_each_block(&mut |_, m| total = total.saturating_add(m));
        if total > MAX_EXPANDED_BLOCKS {
            self.error(
                start,
                format!("stage expands to {total} blocks, more than the limit of {MAX_EXPANDED_BLOCKS}"),
            );
        }
        let (tap, tap_pos) = match tap {
            Some((name, pos)) => (Some(name), Some(pos)),
            None => (None, None),
        };
        Ok((Stage { expr, tap, pos: start }, tap_pos))
    }

    fn expr(&mut self) -> Parsed<Expr> {
        let mut terms = vec![self.term()?];
        while *self.peek() == Tok::Star {
            self.bump();
            terms.push(self.term()?);
        }
        Ok(Expr { terms })
    }

    fn term(&mut self) -> Parsed<Term> {
        let factor = if *self.peek() == Tok::LParen {
            let pos = self.pos();
            if self.depth >= MAX_NESTING {
                self.error(pos, format!("groups nested deeper than {MAX_NESTING} levels"));
                return Err(());
            }
            self.bump();
            self.depth += 1;
            let inner = self.expr();
            self.depth -= 1;
            let inner = inner?;
            self.expect(Tok::RParen, "`)` closing the group")?;
            Factor::Group(inner)
        } else {
            Factor::Block(self.block()?)
        };
        let power = if *self.peek() == Tok::Caret {
            self.bump();
            self.repeat()?
        } else {
            1
        };
        Ok(Term { factor, power })
    }

    fn repeat(&mut self) -> Parsed<u32> {
        let pos = self.pos();
        let Tok::Number(v) = *self.peek() else {
            return self.fail("a repeat count after `^`");
        };
        self.bump();
        if v.fract() != 0.0 {
            self.error(pos, format!("repeat count must be an integer, got {v}"));
            Ok(1)
        } else if v < 1.0 {
            self.error(pos, format!("repeat count must be positive, got {v}"));
            Ok(1)
        } else if v > MAX_REPEAT as f64 {
            self.error(pos, format!("repeat count {v} exceeds the limit of {MAX_REPEAT}"));
            Ok(1)
        } else {
            Ok(v as u32)
        }
    }

    fn block(&mut self) -> Parsed<BlockCall> {
        let (name, pos) = self.ident("a block name or `(`")?;
        let Some(kind) = BlockKind::from_name(&name) else {
            let known: Vec<_> = BlockKind::ALL.iter().map(|k| k.name()).collect();
            self.error(
                pos,
                format!("unknown block `{name}` (expected one of {})", known.join(", ")),
            );
            // Skip the argument list so the statement can still be checked.
            if *self.peek() == Tok::LParen {
                self.kvpairs()?;
            }
            return Ok(BlockCall::new(BlockKind::Gain, vec![("k", 1.0)]));
        };
        let pairs = self.kvpairs()?;
        let specs = kind.params();
        let mut ok = true;
        let mut params = Vec::with_capacity(pairs.len());
        for (key, value, kpos) in pairs {
            if specs.iter().any(|s| s.name == key) {
                params.push((key, value));
            } else {
                let names: Vec<_> = specs.iter().map(|s| s.name).collect();
                self.error(
                    kpos,
                    format!("unknown parameter `{key}` for `{kind}` (expected {})", names.join(", ")),
                );
                ok = false;
            }
        }
        for spec in specs.iter().filter(|s| s.default.is_none()) {
            if !params.iter().any(|(k, _)| k == spec.name) {
                self.error(pos, format!("missing parameter `{}` for `{kind}`", spec.name));
                ok = false;
            }
        }
        let call = BlockCall { kind, params, pos };
        if ok {
            if let Err(e) = call.to_tf() {
                self.error(pos, format!("invalid `{kind}`: {e}"));
            }
        }
        Ok(call)
    }
}

impl Diagnostic {
    pub(crate) fn error(pos: Pos, message: impl Into<String>) -> Self {
        Self {
            line: pos.line,
            column: pos.column,
            message: message.into(),
            severity: Severity::Error,
        }
    }

    pub(crate) fn warning(pos: Pos, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(pos, message)
        }
    }
}
