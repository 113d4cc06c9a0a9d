//! The plan language: a small text format for the seven agent-oriented
//! models of a disaster management plan.
//!
//! ```text
//! plan "Wagga Wagga Local Flood Plan" as WaggaWaggaLFP {
//!   phase Preparedness {
//!     role SESLC "State Emergency Service Local Controller" {}
//!   }
//! }
//! ```
//!
//! [`parse_plan`] and [`render_plan`] round-trip: parsing the canonical
//! rendering of a valid plan yields the same plan.

mod lexer;
mod parser;
mod render;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{ElementRef, Plan};

pub use render::{quote, render_plan};

/// Location of a token or element in the source text. Offsets are bytes,
/// line and column are 1-based (column counts characters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}:{}: expected {expected}, found {found}", span.line, span.column)]
pub struct ParseError {
    pub span: SourceSpan,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(
        span: SourceSpan,
        expected: impl Into<String>,
        found: impl Into<String>,
    ) -> Self {
        ParseError {
            span,
            expected: expected.into(),
            found: found.into(),
        }
    }
}

/// A parsed plan together with the declaration span of each element.
#[derive(Debug, Clone)]
pub struct ParsedPlan {
    pub plan: Plan,
    pub spans: BTreeMap<ElementRef, SourceSpan>,
}

/// Parses plan text, collecting every error found in one pass.
pub fn parse_plan(text: &str) -> Result<Plan, Vec<ParseError>> {
    parser::parse(text).map(|p| p.plan)
}

pub fn parse_plan_with_spans(text: &str) -> Result<ParsedPlan, Vec<ParseError>> {
    parser::parse(text)
}

/// Like [`parse_plan`] but accepts raw bytes; invalid UTF-8 is reported as a
/// parse error at the first offending byte.
pub fn parse_plan_bytes(bytes: &[u8]) -> Result<Plan, Vec<ParseError>> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_plan(text),
        Err(e) => {
            let valid = &bytes[..e.valid_up_to()];
            // valid prefix is UTF-8 by construction
            let prefix = std::str::from_utf8(valid).unwrap_or_default();
            let line = prefix.matches('\n').count() + 1;
            let column = prefix.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            let end = (e.valid_up_to() + e.error_len().unwrap_or(1)).min(bytes.len());
            Err(vec![ParseError::new(
                SourceSpan {
                    start: e.valid_up_to(),
                    end,
                    line,
                    column,
                },
                "UTF-8 text",
                format!("invalid byte 0x{:02x}", bytes[e.valid_up_to()]),
            )])
        }
    }
}

/// Formats a list of parse errors one per line, prefixed with `origin`.
pub fn format_errors(origin: &str, errors: &[ParseError]) -> String {
    let mut out = String::new();
    for e in errors {
        out.push_str(&format!("{origin}:{e}\n"));
    }
    out
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}
