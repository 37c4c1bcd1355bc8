//! Byte classes and tokens generalizing the observed values of a field.
//!
//! Normative class table (ASCII conventions):
//!
//! | class        | bytes                                  | size |
//! |--------------|----------------------------------------|------|
//! | LOWER_HEX    | `a`-`f`                                | 6    |
//! | UPPER_HEX    | `A`-`F`                                | 6    |
//! | WHITESPACE   | space, `\t`, `\n`, `\v`, `\f`, `\r`    | 6    |
//! | DIGIT        | `0`-`9`                                | 10   |
//! | XDIGIT       | `0`-`9`, `a`-`f`, `A`-`F`              | 22   |
//! | LOWER        | `a`-`z`                                | 26   |
//! | UPPER        | `A`-`Z`                                | 26   |
//! | PUNCTUATION  | printable, not alphanumeric, not space | 32   |
//! | CONTROL      | 0x00-0x1F, 0x7F                        | 33   |
//! | ALPHA        | `a`-`z`, `A`-`Z`                       | 52   |
//! | ALNUM        | ALPHA plus DIGIT                       | 62   |
//! | PRINTABLE    | 0x20-0x7E                              | 95   |
//! | ALL          | 0x00-0xFF                              | 256  |

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("cannot infer a token from an empty value list")]
    NoValues,
    #[error("cannot infer a token from an empty value")]
    EmptyValue,
    #[error("malformed token text: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Class {
    LowerHex,
    UpperHex,
    Whitespace,
    Digit,
    Xdigit,
    Lower,
    Upper,
    Punctuation,
    Control,
    Alpha,
    Alnum,
    Printable,
    All,
}

impl Class {
    /// Named classes ordered by cardinality, ties by declaration order.
    pub const ALL_CLASSES: [Class; 13] = [
        Class::LowerHex,
        Class::UpperHex,
        Class::Whitespace,
        Class::Digit,
        Class::Xdigit,
        Class::Lower,
        Class::Upper,
        Class::Punctuation,
        Class::Control,
        Class::Alpha,
        Class::Alnum,
        Class::Printable,
        Class::All,
    ];

    pub fn contains(self, b: u8) -> bool {
        match self {
            Class::LowerHex => (b'a'..=b'f').contains(&b),
            Class::UpperHex => (b'A'..=b'F').contains(&b),
            Class::Whitespace => matches!(b, b' ' | b'\t' | b'\n' | 0x0b | 0x0c | b'\r'),
            Class::Digit => b.is_ascii_digit(),
            Class::Xdigit => b.is_ascii_hexdigit(),
            Class::Lower => b.is_ascii_lowercase(),
            Class::Upper => b.is_ascii_uppercase(),
            Class::Punctuation => b.is_ascii_punctuation(),
            Class::Control => b < 0x20 || b == 0x7f,
            Class::Alpha => b.is_ascii_alphabetic(),
            Class::Alnum => b.is_ascii_alphanumeric(),
            Class::Printable => (0x20..=0x7e).contains(&b),
            Class::All => true,
        }
    }

    pub fn members(self) -> Vec<u8> {
        (0..=255u8).filter(|&b| self.contains(b)).collect()
    }

    pub fn cardinality(self) -> usize {
        (0..=255u8).filter(|&b| self.contains(b)).count()
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::LowerHex => "LOWER_HEX",
            Class::UpperHex => "UPPER_HEX",
            Class::Whitespace => "WHITESPACE",
            Class::Digit => "DIGIT",
            Class::Xdigit => "XDIGIT",
            Class::Lower => "LOWER",
            Class::Upper => "UPPER",
            Class::Punctuation => "PUNCTUATION",
            Class::Control => "CONTROL",
            Class::Alpha => "ALPHA",
            Class::Alnum => "ALNUM",
            Class::Printable => "PRINTABLE",
            Class::All => "ALL",
        }
    }

    pub fn from_name(s: &str) -> Option<Class> {
        Class::ALL_CLASSES.iter().copied().find(|c| c.name() == s)
    }
}

/// One position of a token: a literal byte or a named class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    Lit(u8),
    Class(Class),
}

impl Unit {
    pub fn contains(self, b: u8) -> bool {
        match self {
            Unit::Lit(x) => x == b,
            Unit::Class(c) => c.contains(b),
        }
    }

    pub fn cardinality(self) -> usize {
        match self {
            Unit::Lit(_) => 1,
            Unit::Class(c) => c.cardinality(),
        }
    }

    pub fn members(self) -> Vec<u8> {
        match self {
            Unit::Lit(x) => vec![x],
            Unit::Class(c) => c.members(),
        }
    }

    /// Least unit containing every byte in `bytes`.
    pub fn join(bytes: &[u8]) -> Unit {
        let mut seen = [false; 256];
        for &b in bytes {
            seen[b as usize] = true;
        }
        let distinct: Vec<u8> = (0..=255u8).filter(|&b| seen[b as usize]).collect();
        if distinct.len() == 1 {
            return Unit::Lit(distinct[0]);
        }
        for c in Class::ALL_CLASSES {
            if distinct.iter().all(|&b| c.contains(b)) {
                return Unit::Class(c);
            }
        }
        Unit::Class(Class::All)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Lit(b) => write!(f, "0x{b:02X}"),
            Unit::Class(c) => f.write_str(c.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub units: Vec<Unit>,
    pub plus: bool,
}

impl Token {
    pub fn literal(bytes: &[u8]) -> Token {
        Token { units: bytes.iter().map(|&b| Unit::Lit(b)).collect(), plus: false }
    }

    pub fn class(c: Class, len: usize, plus: bool) -> Token {
        Token { units: vec![Unit::Class(c); len], plus }
    }

    /// Fixed byte string when every unit is a literal and there is no repetition.
    pub fn literal_bytes(&self) -> Option<Vec<u8>> {
        if self.plus {
            return None;
        }
        self.units
            .iter()
            .map(|u| match u {
                Unit::Lit(b) => Some(*b),
                Unit::Class(_) => None,
            })
            .collect()
    }

    pub fn is_literal(&self) -> bool {
        self.literal_bytes().is_some()
    }

    /// True when every unit only admits ASCII digits.
    pub fn is_digits(&self) -> bool {
        self.units.iter().all(|u| match u {
            Unit::Lit(b) => b.is_ascii_digit(),
            Unit::Class(c) => *c == Class::Digit,
        })
    }

    pub fn min_len(&self) -> usize {
        self.units.len()
    }

    pub fn fixed_len(&self) -> Option<usize> {
        if self.plus {
            None
        } else {
            Some(self.units.len())
        }
    }

    /// Unit governing byte `i` of a value of length `len`.
    pub fn unit_at(&self, i: usize) -> Unit {
        if i < self.units.len() {
            self.units[i]
        } else {
            *self.units.last().expect("token has units")
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, u) in self.units.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{u}")?;
        }
        if self.plus {
            f.write_str(" +")?;
        }
        f.write_str("]")
    }
}

impl std::str::FromStr for Token {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Token, TokenError> {
        let inner = s
            .trim()
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(|| TokenError::Parse(s.to_string()))?;
        let mut units = Vec::new();
        let mut plus = false;
        let parts: Vec<&str> = inner.split_whitespace().collect();
        for (i, part) in parts.iter().enumerate() {
            if *part == "+" {
                if i + 1 != parts.len() || units.is_empty() {
                    return Err(TokenError::Parse(s.to_string()));
                }
                plus = true;
            } else if let Some(hex) = part.strip_prefix("0x") {
                let b = u8::from_str_radix(hex, 16).map_err(|_| TokenError::Parse(s.to_string()))?;
                units.push(Unit::Lit(b));
            } else if let Some(c) = Class::from_name(part) {
                units.push(Unit::Class(c));
            } else {
                return Err(TokenError::Parse(s.to_string()));
            }
        }
        if units.is_empty() {
            return Err(TokenError::Parse(s.to_string()));
        }
        Ok(Token { units, plus })
    }
}

/// Generalizes the values of one field into a token.
pub fn infer_token<B: AsRef<[u8]>>(values: &[B]) -> Result<Token, TokenError> {
    if values.is_empty() {
        return Err(TokenError::NoValues);
    }
    if values.iter().any(|v| v.as_ref().is_empty()) {
        return Err(TokenError::EmptyValue);
    }
    let len = values[0].as_ref().len();
    if values.iter().all(|v| v.as_ref().len() == len) {
        let units = (0..len)
            .map(|i| {
                let column: Vec<u8> = values.iter().map(|v| v.as_ref()[i]).collect();
                Unit::join(&column)
            })
            .collect();
        return Ok(Token { units, plus: false });
    }
    let all: Vec<u8> = values.iter().flat_map(|v| v.as_ref().iter().copied()).collect();
    Ok(Token { units: vec![Unit::join(&all)], plus: true })
}

pub fn token_matches(token: &Token, bytes: &[u8]) -> bool {
    if bytes.is_empty() || token.units.is_empty() {
        return false;
    }
    if token.plus {
        if bytes.len() < token.units.len() {
            return false;
        }
    } else if bytes.len() != token.units.len() {
        return false;
    }
    bytes.iter().enumerate().all(|(i, &b)| token.unit_at(i).contains(b))
}
