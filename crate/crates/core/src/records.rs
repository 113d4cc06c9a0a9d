//! Tokenizing for the line-oriented file formats (registry, batch mapping
//! and snapshot). A line is a sequence of bare words and double-quoted
//! strings; strings use the same escapes as the plan language.

use std::fmt::Write;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Field {
    Word(String),
    Str(String),
}

impl Field {
    pub fn describe(&self) -> String {
        match self {
            Field::Word(w) => format!("`{w}`"),
            Field::Str(s) => format!("string {s:?}"),
        }
    }
}

/// Splits one line into fields. A `#` at the start of a word begins a
/// comment that runs to the end of the line.
pub(crate) fn split_fields(line: &str) -> Result<Vec<Field>, String> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c == '#' {
            break;
        }
        if c == '"' {
            chars.next();
            let mut value = String::new();
            let mut closed = false;
            while let Some(c) = chars.next() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => match chars.next() {
                        Some(e @ ('"' | '\\')) => value.push(e),
                        Some('n') => value.push('\n'),
                        Some('r') => value.push('\r'),
                        Some(other) => return Err(format!("invalid escape `\\{other}` in string")),
                        None => break,
                    },
                    other => value.push(other),
                }
            }
            if !closed {
                return Err("unterminated string".to_string());
            }
            fields.push(Field::Str(value));
            continue;
        }
        let mut word = String::new();
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() || c == '"' {
                break;
            }
            word.push(c);
            chars.next();
        }
        fields.push(Field::Word(word));
    }
    Ok(fields)
}

/// Sequential reader over the fields of one line.
pub(crate) struct FieldCursor {
    fields: std::vec::IntoIter<Field>,
}

impl FieldCursor {
    pub fn new(fields: Vec<Field>) -> Self {
        FieldCursor {
            fields: fields.into_iter(),
        }
    }

    pub fn word(&mut self, what: &str) -> Result<String, String> {
        match self.fields.next() {
            Some(Field::Word(w)) => Ok(w),
            Some(other) => Err(format!("expected {what}, found {}", other.describe())),
            None => Err(format!("expected {what}, found end of line")),
        }
    }

    pub fn keyword(&mut self, kw: &str) -> Result<(), String> {
        match self.fields.next() {
            Some(Field::Word(w)) if w == kw => Ok(()),
            Some(other) => Err(format!("expected `{kw}`, found {}", other.describe())),
            None => Err(format!("expected `{kw}`, found end of line")),
        }
    }

    pub fn string(&mut self, what: &str) -> Result<String, String> {
        match self.fields.next() {
            Some(Field::Str(s)) => Ok(s),
            Some(other) => Err(format!("expected {what}, found {}", other.describe())),
            None => Err(format!("expected {what}, found end of line")),
        }
    }

    pub fn next(&mut self) -> Option<Field> {
        self.fields.next()
    }

    pub fn finish(mut self) -> Result<(), String> {
        match self.fields.next() {
            None => Ok(()),
            Some(extra) => Err(format!("unexpected {} at end of record", extra.describe())),
        }
    }
}

/// Quotes `s` as a single-line record string.
pub(crate) fn quote_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out.push('"');
    out
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}
