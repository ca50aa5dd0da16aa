//! The `.gcad` sketch-extrude language.
//!
//! Programs are line-oriented stack machines. Sketch statements (`rect`,
//! `circle`, `poly`) push a planar profile, `extrude` turns the profile on top
//! of the stack into a solid, and the booleans pop two solids and push their
//! combination. `plane` and `translate` only update the workplane state used by
//! later sketches. A program is valid when the stack simulation never
//! underflows and finishes with exactly one solid.
//!
//! ```text
//! # a plate with a hole
//! plane XY 0
//! rect 4 2
//! extrude 0.5
//! circle 0.4
//! extrude 0.5
//! cut
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Workplane selector. Each plane has a right-handed `(u, v, normal)` frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Plane {
    XY,
    YZ,
    XZ,
}

impl Plane {
    pub fn as_str(self) -> &'static str {
        match self {
            Plane::XY => "XY",
            Plane::YZ => "YZ",
            Plane::XZ => "XZ",
        }
    }

    /// Maps plane-local `(u, v, w)` to world coordinates, `w` along the normal.
    pub fn to_world(self, u: f64, v: f64, w: f64) -> [f64; 3] {
        match self {
            Plane::XY => [u, v, w],
            Plane::YZ => [w, u, v],
            Plane::XZ => [u, -w, v],
        }
    }

    /// Inverse of [`Plane::to_world`].
    pub fn to_local(self, p: [f64; 3]) -> [f64; 3] {
        match self {
            Plane::XY => [p[0], p[1], p[2]],
            Plane::YZ => [p[1], p[2], p[0]],
            Plane::XZ => [p[0], p[2], -p[1]],
        }
    }
}

impl FromStr for Plane {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "XY" => Ok(Plane::XY),
            "YZ" => Ok(Plane::YZ),
            "XZ" => Ok(Plane::XZ),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Opcode {
    Plane,
    Rect,
    Circle,
    Poly,
    Extrude,
    Union,
    Cut,
    Intersect,
    Translate,
}

impl Opcode {
    pub fn keyword(self) -> &'static str {
        match self {
            Opcode::Plane => "plane",
            Opcode::Rect => "rect",
            Opcode::Circle => "circle",
            Opcode::Poly => "poly",
            Opcode::Extrude => "extrude",
            Opcode::Union => "union",
            Opcode::Cut => "cut",
            Opcode::Intersect => "intersect",
            Opcode::Translate => "translate",
        }
    }

    fn from_keyword(s: &str) -> Option<Self> {
        let op = match s.to_ascii_lowercase().as_str() {
            "plane" => Opcode::Plane,
            "rect" => Opcode::Rect,
            "circle" => Opcode::Circle,
            "poly" => Opcode::Poly,
            "extrude" => Opcode::Extrude,
            "union" => Opcode::Union,
            "cut" => Opcode::Cut,
            "intersect" => Opcode::Intersect,
            "translate" => Opcode::Translate,
            _ => return None,
        };
        Some(op)
    }

    /// Statements that produce a solid: `extrude` and the three booleans.
    pub fn is_solid_producing(self) -> bool {
        matches!(
            self,
            Opcode::Extrude | Opcode::Union | Opcode::Cut | Opcode::Intersect
        )
    }

    pub fn is_boolean(self) -> bool {
        matches!(self, Opcode::Union | Opcode::Cut | Opcode::Intersect)
    }

    pub fn is_sketch(self) -> bool {
        matches!(self, Opcode::Rect | Opcode::Circle | Opcode::Poly)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoolOp {
    Union,
    Cut,
    Intersect,
}

/// One line of a program.
///
/// Lengths are millimetres. `Rect` and `Circle` are centred on the workplane
/// origin; `Poly` vertices are absolute workplane coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Plane { plane: Plane, offset: f64 },
    Rect { width: f64, height: f64 },
    Circle { radius: f64 },
    Poly { points: Vec<[f64; 2]> },
    Extrude { distance: f64 },
    Boolean(BoolOp),
    Translate { offset: [f64; 3] },
}

impl Statement {
    pub fn opcode(&self) -> Opcode {
        match self {
            Statement::Plane { .. } => Opcode::Plane,
            Statement::Rect { .. } => Opcode::Rect,
            Statement::Circle { .. } => Opcode::Circle,
            Statement::Poly { .. } => Opcode::Poly,
            Statement::Extrude { .. } => Opcode::Extrude,
            Statement::Boolean(BoolOp::Union) => Opcode::Union,
            Statement::Boolean(BoolOp::Cut) => Opcode::Cut,
            Statement::Boolean(BoolOp::Intersect) => Opcode::Intersect,
            Statement::Translate { .. } => Opcode::Translate,
        }
    }

    /// Numeric literals in source order. The plane selector is not numeric.
    pub fn numeric_args(&self) -> Vec<f64> {
        match self {
            Statement::Plane { offset, .. } => vec![*offset],
            Statement::Rect { width, height } => vec![*width, *height],
            Statement::Circle { radius } => vec![*radius],
            Statement::Poly { points } => points.iter().flat_map(|p| [p[0], p[1]]).collect(),
            Statement::Extrude { distance } => vec![*distance],
            Statement::Boolean(_) => Vec::new(),
            Statement::Translate { offset } => offset.to_vec(),
        }
    }

    /// Mutable access to every numeric literal, in source order.
    pub fn numeric_args_mut(&mut self) -> Vec<&mut f64> {
        match self {
            Statement::Plane { offset, .. } => vec![offset],
            Statement::Rect { width, height } => vec![width, height],
            Statement::Circle { radius } => vec![radius],
            Statement::Poly { points } => points.iter_mut().flat_map(|p| p.iter_mut()).collect(),
            Statement::Extrude { distance } => vec![distance],
            Statement::Boolean(_) => Vec::new(),
            Statement::Translate { offset } => offset.iter_mut().collect(),
        }
    }

    /// Number of lexer tokens this statement serializes to.
    pub fn token_count(&self) -> usize {
        let selector = usize::from(matches!(self, Statement::Plane { .. }));
        1 + selector + self.numeric_args().len()
    }

    fn validate(&self) -> Result<(), ParseErrorKind> {
        if self.numeric_args().iter().any(|v| !v.is_finite()) {
            return Err(ParseErrorKind::InvalidArgument(
                "numeric argument is not finite".into(),
            ));
        }
        match self {
            Statement::Extrude { distance } if *distance <= 0.0 => Err(
                ParseErrorKind::InvalidArgument("extrude distance must be positive".into()),
            ),
            Statement::Circle { radius } if *radius <= 0.0 => Err(
                ParseErrorKind::InvalidArgument("circle radius must be positive".into()),
            ),
            Statement::Poly { points } if points.len() < 3 => Err(ParseErrorKind::Arity {
                opcode: Opcode::Poly,
                expected: "an even count >= 6".into(),
                found: points.len() * 2,
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.opcode().keyword())?;
        if let Statement::Plane { plane, .. } = self {
            write!(f, " {}", plane.as_str())?;
        }
        for v in self.numeric_args() {
            write!(f, " {}", format_number(v))?;
        }
        Ok(())
    }
}

/// Shortest decimal that round-trips; never scientific notation.
pub fn format_number(v: f64) -> String {
    // Display for f64 is shortest-round-trip and always positional.
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("program is empty")]
    Empty,
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("invalid numeric literal `{0}`")]
    BadNumber(String),
    #[error("invalid plane selector `{0}`")]
    BadPlane(String),
    #[error("`{opcode}` expects {expected} arguments, found {found}")]
    Arity {
        opcode: Opcode,
        expected: String,
        found: usize,
    },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("stack underflow: `{opcode}` needs {needed}")]
    StackUnderflow { opcode: Opcode, needed: &'static str },
    #[error("program ends with {sketches} sketch(es) and {solids} solid(s) on the stack, expected exactly one solid")]
    BadFinalStack { sketches: usize, solids: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

/// Splits one source line into whitespace-delimited tokens, dropping `#` comments.
fn lex_line(line_no: usize, line: &str) -> Vec<Token<'_>> {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in code.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(token(code, s, i, line_no));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(token(code, s, code.len(), line_no));
    }
    tokens
}

fn token(code: &str, start: usize, end: usize, line: usize) -> Token<'_> {
    Token {
        text: &code[start..end],
        line,
        column: code[..start].chars().count() + 1,
    }
}

/// Number of lexer tokens in `text` (comments and whitespace excluded).
pub fn count_tokens(text: &str) -> usize {
    text.lines()
        .enumerate()
        .map(|(i, l)| lex_line(i + 1, l).len())
        .sum()
}

/// Decimal literal: optional sign, digits with at most one point, at least one digit.
fn parse_number(tok: &Token<'_>) -> Result<f64, ParseError> {
    let s = tok.text;
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    let only_decimal = body.chars().all(|c| c.is_ascii_digit() || c == '.');
    let digits = body.chars().filter(char::is_ascii_digit).count();
    let well_formed = only_decimal && digits > 0 && body.matches('.').count() <= 1;
    let value = if well_formed { s.parse::<f64>().ok() } else { None };
    match value {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(ParseError {
            line: tok.line,
            column: tok.column,
            kind: ParseErrorKind::BadNumber(s.to_string()),
        }),
    }
}

fn parse_statement(tokens: &[Token<'_>]) -> Result<Statement, ParseError> {
    let head = &tokens[0];
    let at = |t: &Token<'_>, kind| ParseError {
        line: t.line,
        column: t.column,
        kind,
    };
    let opcode = Opcode::from_keyword(head.text)
        .ok_or_else(|| at(head, ParseErrorKind::UnknownOpcode(head.text.to_string())))?;
    let args = &tokens[1..];
    let arity = |expected: &str| {
        at(
            head,
            ParseErrorKind::Arity {
                opcode,
                expected: expected.to_string(),
                found: args.len(),
            },
        )
    };
    let numbers = |toks: &[Token<'_>]| toks.iter().map(parse_number).collect::<Result<Vec<_>, _>>();

    let stmt = match opcode {
        Opcode::Plane => {
            if args.len() != 2 {
                return Err(arity("2 (selector, offset)"));
            }
            let plane = args[0]
                .text
                .parse::<Plane>()
                .map_err(|_| at(&args[0], ParseErrorKind::BadPlane(args[0].text.to_string())))?;
            Statement::Plane {
                plane,
                offset: parse_number(&args[1])?,
            }
        }
        Opcode::Rect => {
            if args.len() != 2 {
                return Err(arity("2"));
            }
            let v = numbers(args)?;
            Statement::Rect {
                width: v[0],
                height: v[1],
            }
        }
        Opcode::Circle => {
            if args.len() != 1 {
                return Err(arity("1"));
            }
            Statement::Circle {
                radius: parse_number(&args[0])?,
            }
        }
        Opcode::Poly => {
            if args.len() < 6 || !args.len().is_multiple_of(2) {
                return Err(arity("an even count >= 6"));
            }
            let v = numbers(args)?;
            Statement::Poly {
                points: v.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
            }
        }
        Opcode::Extrude => {
            if args.len() != 1 {
                return Err(arity("1"));
            }
            Statement::Extrude {
                distance: parse_number(&args[0])?,
            }
        }
        Opcode::Union | Opcode::Cut | Opcode::Intersect => {
            if !args.is_empty() {
                return Err(arity("0"));
            }
            Statement::Boolean(match opcode {
                Opcode::Union => BoolOp::Union,
                Opcode::Cut => BoolOp::Cut,
                _ => BoolOp::Intersect,
            })
        }
        Opcode::Translate => {
            if args.len() != 3 {
                return Err(arity("3"));
            }
            let v = numbers(args)?;
            Statement::Translate {
                offset: [v[0], v[1], v[2]],
            }
        }
    };
    stmt.validate().map_err(|kind| at(head, kind))?;
    Ok(stmt)
}

/// Kind of value on the abstract evaluation stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackItem {
    Sketch,
    Solid,
}

/// Abstract stack simulation. Returns the index of the offending statement on failure.
pub fn check_stack(statements: &[Statement]) -> Result<(), (usize, ParseErrorKind)> {
    if statements.is_empty() {
        return Err((0, ParseErrorKind::Empty));
    }
    let mut stack: Vec<StackItem> = Vec::new();
    for (i, stmt) in statements.iter().enumerate() {
        let op = stmt.opcode();
        match op {
            Opcode::Plane | Opcode::Translate => {}
            Opcode::Rect | Opcode::Circle | Opcode::Poly => stack.push(StackItem::Sketch),
            Opcode::Extrude => match stack.pop() {
                Some(StackItem::Sketch) => stack.push(StackItem::Solid),
                _ => {
                    return Err((
                        i,
                        ParseErrorKind::StackUnderflow {
                            opcode: op,
                            needed: "a sketch on top of the stack",
                        },
                    ))
                }
            },
            Opcode::Union | Opcode::Cut | Opcode::Intersect => {
                let n = stack.len();
                if n < 2 || stack[n - 1] != StackItem::Solid || stack[n - 2] != StackItem::Solid {
                    return Err((
                        i,
                        ParseErrorKind::StackUnderflow {
                            opcode: op,
                            needed: "two solids on top of the stack",
                        },
                    ));
                }
                stack.pop();
            }
        }
    }
    if stack != [StackItem::Solid] {
        let solids = stack.iter().filter(|s| **s == StackItem::Solid).count();
        return Err((
            statements.len() - 1,
            ParseErrorKind::BadFinalStack {
                sketches: stack.len() - solids,
                solids,
            },
        ));
    }
    Ok(())
}

/// A parsed, stack-safe program.
#[derive(Debug, Clone)]
pub struct CadProgram {
    statements: Vec<Statement>,
    source_text: String,
}

impl PartialEq for CadProgram {
    /// Structural equality; source formatting is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
    }
}

impl CadProgram {
    /// Builds a program from statements, applying the same checks as [`parse`].
    /// The source text becomes the canonical serialization.
    pub fn from_statements(statements: Vec<Statement>) -> Result<Self, ParseError> {
        for (i, s) in statements.iter().enumerate() {
            s.validate().map_err(|kind| ParseError {
                line: i + 1,
                column: 1,
                kind,
            })?;
        }
        check_stack(&statements).map_err(|(i, kind)| ParseError {
            line: i + 1,
            column: 1,
            kind,
        })?;
        let source_text = serialize_statements(&statements);
        Ok(CadProgram {
            statements,
            source_text,
        })
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn into_statements(self) -> Vec<Statement> {
        self.statements
    }

    pub fn complexity(&self) -> ComplexityProfile {
        complexity(self)
    }

    pub fn serialize(&self) -> String {
        serialize(self)
    }
}

/// Parses program text into a validated [`CadProgram`].
pub fn parse(text: &str) -> Result<CadProgram, ParseError> {
    let mut statements = Vec::new();
    let mut positions = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tokens = lex_line(i + 1, line);
        if tokens.is_empty() {
            continue;
        }
        positions.push((tokens[0].line, tokens[0].column));
        statements.push(parse_statement(&tokens)?);
    }
    if statements.is_empty() {
        return Err(ParseError {
            line: 1,
            column: 1,
            kind: ParseErrorKind::Empty,
        });
    }
    check_stack(&statements).map_err(|(i, kind)| ParseError {
        line: positions[i].0,
        column: positions[i].1,
        kind,
    })?;
    Ok(CadProgram {
        statements,
        source_text: text.to_string(),
    })
}

fn serialize_statements(statements: &[Statement]) -> String {
    let mut out = String::new();
    for s in statements {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    out
}

/// Canonical text: lowercase opcodes, single spaces, one statement per line,
/// shortest round-trip numerals, trailing newline, no comments.
pub fn serialize(p: &CadProgram) -> String {
    serialize_statements(&p.statements)
}

/// Canonicalizes raw text if it parses; used for duplicate detection.
pub fn canonical_text(text: &str) -> Option<String> {
    parse(text).ok().map(|p| serialize(&p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub token_count: usize,
    pub op_count: usize,
}

pub fn complexity(p: &CadProgram) -> ComplexityProfile {
    ComplexityProfile {
        token_count: p.statements.iter().map(Statement::token_count).sum(),
        op_count: p
            .statements
            .iter()
            .filter(|s| s.opcode().is_solid_producing())
            .count(),
    }
}
