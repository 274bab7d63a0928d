use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    Integer,
    Float,
    String,
    Date,
}

impl DataType {
    pub fn as_str(self) -> &'static str {
        match self {
            DataType::Integer => "integer",
            DataType::Float => "float",
            DataType::String => "string",
            DataType::Date => "date",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, DataType::Integer | DataType::Float)
    }

    /// Types admitting `<`/`>` comparison in CMP and ARG.
    pub fn is_ordered(self) -> bool {
        self != DataType::String
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataType {
    type Err = ValueParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "integer" => Ok(DataType::Integer),
            "float" => Ok(DataType::Float),
            "string" => Ok(DataType::String),
            "date" => Ok(DataType::Date),
            other => Err(ValueParseError::UnknownTag(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValueParseError {
    #[error("unknown datatype tag `{0}`")]
    UnknownTag(String),
    #[error("`{lexical}` is not a valid {tag}")]
    BadLexical { lexical: String, tag: DataType },
    #[error("malformed typed literal `{0}`")]
    Malformed(String),
}

/// Attribute value. Floats are always finite; dates are ISO-8601 strings
/// ordered lexically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AttributeValue {
    Integer(i64),
    Float(f64),
    String(String),
    Date(String),
}

impl AttributeValue {
    pub fn datatype(&self) -> DataType {
        match self {
            AttributeValue::Integer(_) => DataType::Integer,
            AttributeValue::Float(_) => DataType::Float,
            AttributeValue::String(_) => DataType::String,
            AttributeValue::Date(_) => DataType::Date,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            AttributeValue::Integer(i) => Some(*i as f64),
            AttributeValue::Float(x) => Some(*x),
            _ => None,
        }
    }

    /// Parses a lexical form under an explicit tag. Floats accept scientific
    /// notation and must be finite.
    pub fn parse_typed(lexical: &str, tag: DataType) -> Result<Self, ValueParseError> {
        let bad = || ValueParseError::BadLexical {
            lexical: lexical.to_string(),
            tag,
        };
        match tag {
            DataType::Integer => lexical.trim().parse::<i64>().map(AttributeValue::Integer).map_err(|_| bad()),
            DataType::Float => match lexical.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(AttributeValue::Float(normalize_zero(x))),
                _ => Err(bad()),
            },
            DataType::String => Ok(AttributeValue::String(lexical.to_string())),
            DataType::Date => {
                if is_iso_date(lexical.trim()) {
                    Ok(AttributeValue::Date(lexical.trim().to_string()))
                } else {
                    Err(bad())
                }
            }
        }
    }

    /// Classifies an untyped token: integer, then float, then ISO date.
    pub fn parse_bare(token: &str) -> Option<Self> {
        let token = token.trim();
        if token.is_empty() {
            return None;
        }
        if let Ok(i) = token.parse::<i64>() {
            return Some(AttributeValue::Integer(i));
        }
        let looks_float = token
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-'))
            && token.bytes().any(|b| b.is_ascii_digit());
        if looks_float {
            if let Ok(x) = token.parse::<f64>() {
                if x.is_finite() {
                    return Some(AttributeValue::Float(normalize_zero(x)));
                }
            }
        }
        if is_iso_date(token) {
            return Some(AttributeValue::Date(token.to_string()));
        }
        None
    }

    /// Encoding used in `triples.tsv`: `"lexical"^^tag`.
    pub fn to_tsv(&self) -> String {
        format!("\"{}\"^^{}", escape(&self.lexical()), self.datatype())
    }

    pub fn from_tsv(s: &str) -> Result<Self, ValueParseError> {
        let s = s.trim();
        let malformed = || ValueParseError::Malformed(s.to_string());
        let (quoted, tag) = s.rsplit_once("^^").ok_or_else(malformed)?;
        let tag: DataType = tag.parse()?;
        let inner = quoted.strip_prefix('"').and_then(|q| q.strip_suffix('"')).ok_or_else(malformed)?;
        let lexical = unescape(inner).ok_or_else(malformed)?;
        AttributeValue::parse_typed(&lexical, tag)
    }

    /// Canonical lexical form. Floats print in scientific notation so that
    /// they never read back as integers.
    pub fn lexical(&self) -> String {
        match self {
            AttributeValue::Integer(i) => i.to_string(),
            AttributeValue::Float(x) => format!("{x:e}"),
            AttributeValue::String(s) | AttributeValue::Date(s) => s.clone(),
        }
    }

    /// Ordering used by CMP and ARG. Numbers compare numerically across
    /// integer/float; dates and strings lexically; other pairs are
    /// incomparable.
    pub fn compare(&self, other: &AttributeValue) -> Option<Ordering> {
        match (self, other) {
            (AttributeValue::Date(a), AttributeValue::Date(b)) | (AttributeValue::String(a), AttributeValue::String(b)) => Some(a.cmp(b)),
            _ => {
                let (a, b) = (self.as_f64()?, other.as_f64()?);
                a.partial_cmp(&b)
            }
        }
    }
}

fn normalize_zero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next()? {
                '"' => out.push('"'),
                '\\' => out.push('\\'),
                't' => out.push('\t'),
                'n' => out.push('\n'),
                _ => return None,
            }
        } else {
            out.push(c);
        }
    }
    Some(out)
}

/// `YYYY`, `YYYY-MM`, `YYYY-MM-DD`, optionally followed by `T` and a time.
/// Requires a dash so that a bare year never shadows an integer.
fn is_iso_date(s: &str) -> bool {
    let (date, time) = match s.split_once('T') {
        Some((d, t)) => (d, Some(t)),
        None => (s, None),
    };
    let date = date.strip_prefix('-').unwrap_or(date);
    let parts: Vec<&str> = date.split('-').collect();
    let digits = |p: &str, n: usize| p.len() == n && p.bytes().all(|b| b.is_ascii_digit());
    let date_ok = match parts.as_slice() {
        [y, m] => digits(y, 4) && digits(m, 2),
        [y, m, d] => digits(y, 4) && digits(m, 2) && digits(d, 2),
        _ => false,
    };
    let time_ok = time.is_none_or(|t| {
        !t.is_empty()
            && t.as_bytes()[0].is_ascii_digit()
            && t.bytes()
                .all(|b| b.is_ascii_digit() || matches!(b, b':' | b'.' | b'Z' | b'+' | b'-'))
    });
    date_ok && time_ok
}

impl PartialEq for AttributeValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for AttributeValue {}

impl PartialOrd for AttributeValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Structural total order: by tag, then payload. Floats use `total_cmp`.
impl Ord for AttributeValue {
    fn cmp(&self, other: &Self) -> Ordering {
        use AttributeValue::*;
        match (self, other) {
            (Integer(a), Integer(b)) => a.cmp(b),
            (Float(a), Float(b)) => a.total_cmp(b),
            (String(a), String(b)) | (Date(a), Date(b)) => a.cmp(b),
            _ => self.datatype().cmp(&other.datatype()),
        }
    }
}

impl Hash for AttributeValue {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.datatype().hash(state);
        match self {
            AttributeValue::Integer(i) => i.hash(state),
            AttributeValue::Float(x) => x.to_bits().hash(state),
            AttributeValue::String(s) | AttributeValue::Date(s) => s.hash(state),
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_tsv())
    }
}

impl From<AttributeValue> for String {
    fn from(v: AttributeValue) -> String {
        v.to_tsv()
    }
}

impl TryFrom<String> for AttributeValue {
    type Error = ValueParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        AttributeValue::from_tsv(&s)
    }
}
