//! The `.occ` model text format.
//!
//! ```text
//! # comment
//! model osc
//! mode a
//! omega a 0
//! jump 1.4142135623730951 * create(a)
//! jump 1 * destroy(a,2)
//! ```
//!
//! One statement per line; `#` starts a comment anywhere on a line. Factor
//! exponents default to 1. The jump coefficient is the monomial prefactor λ,
//! not the transition rate `2λ²·…`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use thiserror::Error;

use crate::model::{validate, Factor, FactorKind, JumpOperator, ModeId, ModelSpec, ValidationError};
use crate::numfmt::g17;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown mode {0:?}")]
    UnknownMode(String),
    #[error("duplicate mode {0:?}")]
    DuplicateMode(String),
    #[error("duplicate model statement")]
    DuplicateModel,
    #[error("non-positive coefficient")]
    NonPositiveCoefficient,
    #[error("{0}")]
    Invalid(ValidationError),
}

/// A parse failure with a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

struct Cursor<'a> {
    line: usize,
    chars: Vec<(usize, char)>,
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: usize, src: &'a str) -> Self {
        Cursor {
            line,
            chars: src.char_indices().collect(),
            src,
            pos: 0,
        }
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn error_at(&self, column: usize, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            column,
            kind,
        }
    }

    fn syntax(&self, msg: &str) -> ParseError {
        self.error_at(self.column(), ParseErrorKind::Syntax(msg.to_string()))
    }

    fn slice(&self, start: usize) -> &'a str {
        let from = self.chars.get(start).map_or(self.src.len(), |&(b, _)| b);
        let to = self.chars.get(self.pos).map_or(self.src.len(), |&(b, _)| b);
        &self.src[from..to]
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> (usize, &'a str) {
        let start = self.pos;
        while self.peek().is_some_and(&pred) {
            self.pos += 1;
        }
        (start + 1, self.slice(start))
    }

    fn ident(&mut self, what: &str) -> Result<(usize, &'a str), ParseError> {
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                Ok(self.take_while(|c| c.is_ascii_alphanumeric() || c == '_'))
            }
            _ => Err(self.syntax(&format!("expected {what}"))),
        }
    }

    fn real(&mut self) -> Result<(usize, f64), ParseError> {
        let (col, tok) = self.take_while(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'));
        if tok.is_empty() {
            return Err(self.syntax("expected a number"));
        }
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok((col, v)),
            _ => Err(self.error_at(col, ParseErrorKind::Syntax(format!("invalid number {tok:?}")))),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax(&format!("expected '{c}'")))
        }
    }

    /// Requires whitespace or end of line after a keyword or value.
    fn boundary(&mut self) -> Result<(), ParseError> {
        if self.at_end() || self.peek().is_some_and(char::is_whitespace) {
            self.skip_ws();
            Ok(())
        } else {
            Err(self.syntax("unexpected character"))
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        if self.at_end() {
            Ok(())
        } else {
            Err(self.syntax("unexpected trailing input"))
        }
    }
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<ModelSpec, ParseError> {
    let mut name: Option<String> = None;
    let mut modes: Vec<String> = Vec::new();
    let mut frequencies: Vec<(usize, usize, String, f64)> = Vec::new();
    let mut jumps: Vec<JumpOperator> = Vec::new();
    let mut jump_lines: Vec<usize> = Vec::new();

    let lookup = |modes: &[String], cur: &Cursor, col: usize, m: &str| {
        modes
            .iter()
            .position(|x| x == m)
            .map(ModeId)
            .ok_or_else(|| cur.error_at(col, ParseErrorKind::UnknownMode(m.to_string())))
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut cur = Cursor::new(line_no, content);
        cur.skip_ws();
        if cur.at_end() {
            continue;
        }
        let (kw_col, kw) = cur.ident("a statement keyword")?;
        cur.boundary()?;
        match kw {
            "model" => {
                if name.is_some() {
                    return Err(cur.error_at(kw_col, ParseErrorKind::DuplicateModel));
                }
                let (_, id) = cur.ident("model name")?;
                name = Some(id.to_string());
                cur.finish()?;
            }
            "mode" => {
                let (col, id) = cur.ident("mode name")?;
                if modes.iter().any(|m| m == id) {
                    return Err(cur.error_at(col, ParseErrorKind::DuplicateMode(id.to_string())));
                }
                modes.push(id.to_string());
                cur.finish()?;
            }
            "omega" => {
                let (col, id) = cur.ident("mode name")?;
                cur.boundary()?;
                let (_, w) = cur.real()?;
                cur.finish()?;
                frequencies.push((line_no, col, id.to_string(), w));
            }
            "jump" => {
                let (col, coefficient) = cur.real()?;
                if coefficient <= 0.0 {
                    return Err(cur.error_at(col, ParseErrorKind::NonPositiveCoefficient));
                }
                cur.skip_ws();
                cur.expect('*')?;
                cur.skip_ws();
                let mut factors = Vec::new();
                loop {
                    let (fcol, kw) = cur.ident("create(...) or destroy(...)")?;
                    let kind = match kw {
                        "create" => FactorKind::Create,
                        "destroy" => FactorKind::Destroy,
                        other => {
                            return Err(cur.error_at(fcol, ParseErrorKind::Syntax(format!("unknown factor {other:?}"))))
                        }
                    };
                    cur.skip_ws();
                    cur.expect('(')?;
                    cur.skip_ws();
                    let (mcol, m) = cur.ident("mode name")?;
                    let mode = lookup(&modes, &cur, mcol, m)?;
                    cur.skip_ws();
                    let mut power = 1u32;
                    if cur.peek() == Some(',') {
                        cur.pos += 1;
                        cur.skip_ws();
                        let (pcol, digits) = cur.take_while(|c| c.is_ascii_digit());
                        power = match digits.parse::<u32>() {
                            Ok(p) if p > 0 => p,
                            _ => {
                                return Err(cur.error_at(
                                    pcol,
                                    ParseErrorKind::Syntax("expected a positive integer exponent".into()),
                                ))
                            }
                        };
                        cur.skip_ws();
                    }
                    cur.expect(')')?;
                    factors.push(Factor { mode, kind, power });
                    cur.skip_ws();
                    if cur.at_end() {
                        break;
                    }
                }
                jumps.push(JumpOperator::new(coefficient, factors));
                jump_lines.push(line_no);
            }
            other => return Err(cur.error_at(kw_col, ParseErrorKind::Syntax(format!("unknown statement {other:?}")))),
        }
    }

    let mut freq_table = alloc::vec![None; modes.len()];
    for (line, col, m, w) in frequencies {
        let Some(i) = modes.iter().position(|x| *x == m) else {
            return Err(ParseError {
                line,
                column: col,
                kind: ParseErrorKind::UnknownMode(m),
            });
        };
        freq_table[i] = Some(w);
    }

    let spec = ModelSpec {
        name: name.unwrap_or_else(|| "unnamed".to_string()),
        modes,
        jumps,
        frequencies: freq_table,
    };
    if let Err(errors) = validate(&spec) {
        let first = errors.into_iter().next().expect("non-empty error list");
        let line = first.jump().map_or(1, |j| jump_lines[j]);
        return Err(ParseError {
            line,
            column: 1,
            kind: ParseErrorKind::Invalid(first),
        });
    }
    Ok(spec)
}

/// Canonical text: header comment, then model, modes in index order,
/// frequencies, jumps in declaration order. Numbers use 17 significant digits.
pub fn serialize_model(spec: &ModelSpec) -> String {
    let mut out = String::new();
    out.push_str("# occnum model v1\n");
    out.push_str("# jump coefficient = monomial prefactor lambda; transition rate = 2*lambda^2*|<n+d|monomial|n>|^2\n");
    let _ = writeln!(out, "model {}", spec.name);
    for m in &spec.modes {
        let _ = writeln!(out, "mode {m}");
    }
    for (m, w) in spec.modes.iter().zip(&spec.frequencies) {
        if let Some(w) = w {
            let _ = writeln!(out, "omega {m} {}", g17(*w));
        }
    }
    for op in &spec.jumps {
        let _ = write!(out, "jump {} *", g17(op.coefficient));
        for f in &op.factors {
            let mode = &spec.modes[f.mode.0];
            if f.power == 1 {
                let _ = write!(out, " {}({mode})", f.kind.keyword());
            } else {
                let _ = write!(out, " {}({mode},{})", f.kind.keyword(), f.power);
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_model, Action};

    #[test]
    fn parses_oscillator() {
        let spec = parse_model("model osc\nmode a\njump 1.41421356 * create(a)\njump 1 * destroy(a,2)").unwrap();
        assert_eq!(spec.name, "osc");
        assert_eq!(spec.jumps.len(), 2);
        let mu = spec.jumps[0].coefficient * spec.jumps[0].coefficient;
        assert!((mu - 2.0).abs() < 1e-7);
        assert_eq!(spec.jumps[0].action(ModeId(0)), Action::Create(1));
        assert_eq!(spec.jumps[1].action(ModeId(0)), Action::Destroy(2));
    }

    #[test]
    fn parses_truncated_lvm() {
        let spec = parse_model("model t\nmode x\nmode y\njump 1 * destroy(x) create(y)").unwrap();
        let builtin = builtin_model("lvm_truncated", &[]).unwrap();
        assert_eq!(spec.jumps, builtin.jumps);
    }

    #[test]
    fn rejects_negative_coefficient() {
        let err = parse_model("jump -1 * create(a)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonPositiveCoefficient);
        assert_eq!((err.line, err.column), (1, 6));
    }

    #[test]
    fn comments_and_whitespace() {
        let text = "# header\n  model   m # trailing\n\nmode a\n  jump 0.5 *create( a , 3 )  destroy(b)\n";
        let err = parse_model(text).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownMode("b".into()));
        assert_eq!((err.line, err.column), (5, 38));
        let spec = parse_model(&text.replace(" destroy(b)", "")).unwrap();
        assert_eq!(spec.jumps[0].factors, alloc::vec![Factor::create(0, 3)]);
    }

    #[test]
    fn error_kinds() {
        let e = |t: &str| parse_model(t).unwrap_err();
        assert!(matches!(e("mode a\nmode a").kind, ParseErrorKind::DuplicateMode(_)));
        assert!(matches!(e("model a\nmodel b").kind, ParseErrorKind::DuplicateModel));
        assert!(matches!(e("mode a\njump 1 create(a)").kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(
            e("mode a\njump 1 * create(a,0)").kind,
            ParseErrorKind::Syntax(_)
        ));
        assert!(matches!(e("mode a\njump 1 * flip(a)").kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(
            e("mode a\njump nan * create(a)").kind,
            ParseErrorKind::Syntax(_)
        ));
        assert!(matches!(e("mode a\nomega b 1").kind, ParseErrorKind::UnknownMode(_)));
        assert!(matches!(e("bogus").kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(e("mode a b").kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(e("modea").kind, ParseErrorKind::Syntax(_)));
        let mixed = e("model m\nmode a\njump 1 * create(a)\njump 2 * create(a) destroy(a)");
        assert_eq!(mixed.line, 4);
        assert!(matches!(
            mixed.kind,
            ParseErrorKind::Invalid(ValidationError::MixedAction { jump: 1, mode: 0 })
        ));
        assert!(matches!(
            e("model m").kind,
            ParseErrorKind::Invalid(ValidationError::NoModes)
        ));
    }

    #[test]
    fn canonical_form() {
        let text = serialize_model(&builtin_model("lvm", &[1.0, 2.0]).unwrap());
        assert!(text.contains("\njump 2 * destroy(predator)\n"), "{text}");
        assert!(text.contains("\njump 1 * destroy(prey) create(predator)\n"));
        let osc = serialize_model(&builtin_model("oscillator", &[2.0, 0.25]).unwrap());
        assert!(osc.contains("omega a 0.25\n"));
        assert!(osc.contains("jump 1.4142135623730951 * create(a)\n"));
        assert!(osc.contains("jump 1 * destroy(a,2)\n"));
    }

    #[test]
    fn builtins_round_trip() {
        for spec in [
            builtin_model("oscillator", &[2.0, 0.7]).unwrap(),
            builtin_model("lvm", &[core::f64::consts::SQRT_2, 3f64.sqrt()]).unwrap(),
            builtin_model("lvm_truncated", &[]).unwrap(),
            builtin_model("cannibal", &[1.0, 0.1]).unwrap(),
        ] {
            assert_eq!(parse_model(&serialize_model(&spec)).unwrap(), spec);
        }
    }
}
