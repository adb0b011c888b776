//! Shape expressions: `[]`, `[N, M]`, `[4,]`, `[1 + 2 + n + n]`.
//!
//! Sums are kept unevaluated; resolution of symbolic terms against the
//! declared parameters happens in validation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DimTerm {
    Literal(u64),
    Symbol(String),
}

/// One dimension: a sum of one or more terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DimExpr {
    pub terms: Vec<DimTerm>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ShapeExpr {
    pub dims: Vec<DimExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("shape syntax error at offset {offset} in `{text}`: {message}")]
pub struct ShapeSyntaxError {
    pub text: String,
    pub offset: usize,
    pub message: String,
}

impl DimTerm {
    pub fn symbol(&self) -> Option<&str> {
        match self {
            DimTerm::Symbol(s) => Some(s),
            DimTerm::Literal(_) => None,
        }
    }
}

impl DimExpr {
    pub fn literal(n: u64) -> Self {
        Self {
            terms: vec![DimTerm::Literal(n)],
        }
    }

    pub fn symbol(s: &str) -> Self {
        Self {
            terms: vec![DimTerm::Symbol(s.to_string())],
        }
    }
}

impl ShapeExpr {
    pub fn scalar() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.dims.is_empty()
    }

    /// All symbolic terms in order of appearance (duplicates kept).
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.dims
            .iter()
            .flat_map(|d| d.terms.iter())
            .filter_map(DimTerm::symbol)
    }
}

pub fn parse_shape(text: &str) -> Result<ShapeExpr, ShapeSyntaxError> {
    Parser::new(text).parse()
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            text,
            bytes: text.as_bytes(),
            pos: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> ShapeSyntaxError {
        ShapeSyntaxError {
            text: self.text.to_string(),
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> Result<(), ShapeSyntaxError> {
        self.skip_ws();
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", b as char)))
        }
    }

    fn parse(mut self) -> Result<ShapeExpr, ShapeSyntaxError> {
        self.expect(b'[')?;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b']') => {
                    self.pos += 1;
                    break;
                }
                None => return Err(self.err("unbalanced `[`")),
                _ => {}
            }
            dims.push(self.dim()?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {}
                None => return Err(self.err("unbalanced `[`")),
                Some(c) => return Err(self.err(format!("illegal token `{}`", c as char))),
            }
        }
        self.skip_ws();
        if self.pos != self.bytes.len() {
            return Err(self.err("trailing input after `]`"));
        }
        Ok(ShapeExpr { dims })
    }

    fn dim(&mut self) -> Result<DimExpr, ShapeSyntaxError> {
        let mut terms = vec![self.term()?];
        loop {
            self.skip_ws();
            if self.peek() == Some(b'+') {
                self.pos += 1;
                terms.push(self.term()?);
            } else {
                return Ok(DimExpr { terms });
            }
        }
    }

    fn term(&mut self) -> Result<DimTerm, ShapeSyntaxError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_digit() => {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                self.text[start..self.pos]
                    .parse()
                    .map(DimTerm::Literal)
                    .map_err(|_| self.err("integer literal out of range"))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                while self
                    .peek()
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_')
                {
                    self.pos += 1;
                }
                Ok(DimTerm::Symbol(self.text[start..self.pos].to_string()))
            }
            Some(c) => Err(self.err(format!("illegal token `{}`", c as char))),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

impl fmt::Display for DimTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimTerm::Literal(n) => write!(f, "{n}"),
            DimTerm::Symbol(s) => f.write_str(s),
        }
    }
}

impl fmt::Display for DimExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// Canonical form: `[a, b + c]`.
impl fmt::Display for ShapeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str("]")
    }
}

impl FromStr for ShapeExpr {
    type Err = ShapeSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_shape(s)
    }
}

impl Serialize for ShapeExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ShapeExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        shape_from_json(&value).map_err(serde::de::Error::custom)
    }
}

/// Models emit shapes either as strings (`"[N, M]"`) or as JSON arrays
/// (`[4]`, `["N", "M"]`). Both are accepted.
pub fn shape_from_json(value: &serde_json::Value) -> Result<ShapeExpr, ShapeSyntaxError> {
    use serde_json::Value;
    match value {
        Value::String(s) => parse_shape(s.trim()),
        Value::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            parse_shape(&format!("[{}]", parts.join(", ")))
        }
        Value::Null => Ok(ShapeExpr::scalar()),
        other => Err(ShapeSyntaxError {
            text: other.to_string(),
            offset: 0,
            message: "shape must be a string or an array".into(),
        }),
    }
}
