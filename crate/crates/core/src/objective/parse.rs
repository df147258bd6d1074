//! Parser for the neural-objective DSL.
//!
//! ```text
//! objective := term (ws term)*
//! term      := ('+' | '-') NAME (':' POSITIVE_DECIMAL)?
//! NAME      := [A-Za-z0-9_]+
//! ```
//!
//! `+` activates a region, `-` suppresses it, and an omitted weight is 1.0.
//! Leading and trailing whitespace is ignored.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Activate,
    Suppress,
}

impl Direction {
    pub fn symbol(self) -> char {
        match self {
            Direction::Activate => '+',
            Direction::Suppress => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveTerm {
    pub region: String,
    pub direction: Direction,
    pub weight: f64,
}

impl ObjectiveTerm {
    pub fn activate(region: impl Into<String>, weight: f64) -> Self {
        Self {
            region: region.into(),
            direction: Direction::Activate,
            weight,
        }
    }

    pub fn suppress(region: impl Into<String>, weight: f64) -> Self {
        Self {
            region: region.into(),
            direction: Direction::Suppress,
            weight,
        }
    }

    /// Signed coefficient of the region mean in the loss: `-λ` to activate, `+λ` to suppress.
    pub fn coefficient(&self) -> f64 {
        match self.direction {
            Direction::Activate => -self.weight,
            Direction::Suppress => self.weight,
        }
    }
}

impl fmt::Display for ObjectiveTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}:{}", self.direction.symbol(), self.region, self.weight)
    }
}

/// Formats terms back into DSL text that parses to the same terms.
pub fn format_terms(terms: &[ObjectiveTerm]) -> String {
    terms
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    MissingSign,
    MissingName,
    UnexpectedChar(char),
    MissingWeight,
    InvalidWeight(String),
    NonPositiveWeight(String),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "empty objective"),
            Self::MissingSign => write!(f, "expected '+' or '-' before region name"),
            Self::MissingName => write!(f, "expected a region name"),
            Self::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            Self::MissingWeight => write!(f, "expected a weight after ':'"),
            Self::InvalidWeight(w) => write!(f, "invalid weight {w:?}"),
            Self::NonPositiveWeight(w) => write!(f, "weight must be positive, got {w}"),
        }
    }
}

/// Parse failure at a byte offset into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("objective parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.pos,
            kind,
        }
    }

    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        self.pos > start
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn unexpected(&self) -> ParseError {
        match self.peek_char() {
            Some(c) => self.err(ParseErrorKind::UnexpectedChar(c)),
            None => self.err(ParseErrorKind::MissingName),
        }
    }

    fn term(&mut self) -> Result<ObjectiveTerm, ParseError> {
        let direction = match self.peek() {
            Some(b'+') => Direction::Activate,
            Some(b'-') => Direction::Suppress,
            Some(b) if is_name_byte(b) => return Err(self.err(ParseErrorKind::MissingSign)),
            _ => return Err(self.unexpected()),
        };
        self.pos += 1;
        let name = self.take_while(is_name_byte);
        if name.is_empty() {
            return Err(match self.peek() {
                None => self.err(ParseErrorKind::MissingName),
                Some(_) => self.unexpected(),
            });
        }
        let mut weight = 1.0;
        if self.peek() == Some(b':') {
            self.pos += 1;
            weight = self.weight()?;
        }
        Ok(ObjectiveTerm {
            region: name.to_string(),
            direction,
            weight,
        })
    }

    fn weight(&mut self) -> Result<f64, ParseError> {
        let start = self.pos;
        match self.peek() {
            Some(b) if b.is_ascii_digit() || b == b'.' => {}
            None => return Err(self.err(ParseErrorKind::MissingWeight)),
            Some(_) => return Err(self.unexpected()),
        }
        let int = self.take_while(|b| b.is_ascii_digit());
        let mut frac = "";
        if self.peek() == Some(b'.') {
            self.pos += 1;
            frac = self.take_while(|b| b.is_ascii_digit());
        }
        let text = &self.src[start..self.pos];
        if int.is_empty() && frac.is_empty() {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::InvalidWeight(text.to_string()),
            });
        }
        let value: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            kind: ParseErrorKind::InvalidWeight(text.to_string()),
        })?;
        if !(value > 0.0) || !value.is_finite() {
            return Err(ParseError {
                offset: start,
                kind: ParseErrorKind::NonPositiveWeight(text.to_string()),
            });
        }
        Ok(value)
    }
}

/// Parses objective text into its ordered terms.
pub fn parse_objective(text: &str) -> Result<Vec<ObjectiveTerm>, ParseError> {
    let mut cur = Cursor { src: text, pos: 0 };
    cur.skip_ws();
    if cur.peek().is_none() {
        return Err(cur.err(ParseErrorKind::Empty));
    }
    let mut terms = Vec::new();
    loop {
        terms.push(cur.term()?);
        let had_ws = cur.skip_ws();
        if cur.peek().is_none() {
            return Ok(terms);
        }
        if !had_ws {
            return Err(cur.unexpected());
        }
    }
}
