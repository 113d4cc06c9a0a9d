use std::fmt;

use super::{ParseError, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TokenKind {
    Ident(String),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "`{s}`"),
            TokenKind::Str(s) => {
                let short: String = s.chars().take(24).collect();
                if short.len() < s.len() {
                    write!(f, "string \"{short}...\"")
                } else {
                    write!(f, "string \"{short}\"")
                }
            }
            TokenKind::LBrace => f.write_str("`{`"),
            TokenKind::RBrace => f.write_str("`}`"),
            TokenKind::LBracket => f.write_str("`[`"),
            TokenKind::RBracket => f.write_str("`]`"),
            TokenKind::Comma => f.write_str("`,`"),
            TokenKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

struct Cursor<'a> {
    text: &'a str,
    offset: usize,
    line: usize,
    column: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.text[self.offset..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn span_from(&self, start: (usize, usize, usize)) -> SourceSpan {
        SourceSpan {
            start: start.0,
            end: self.offset,
            line: start.1,
            column: start.2,
        }
    }

    fn mark(&self) -> (usize, usize, usize) {
        (self.offset, self.line, self.column)
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

/// Splits the input into tokens. Lexical errors are collected and the
/// offending input skipped, so the parser still sees a usable stream.
pub(crate) fn tokenize(text: &str) -> (Vec<Token>, Vec<ParseError>) {
    let mut cur = Cursor {
        text,
        offset: 0,
        line: 1,
        column: 1,
    };
    let mut tokens = Vec::new();
    let mut errors = Vec::new();

    while let Some(c) = cur.peek() {
        let start = cur.mark();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '#' {
            while let Some(c) = cur.peek() {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        let kind = match c {
            '{' | '}' | '[' | ']' | ',' => {
                cur.bump();
                match c {
                    '{' => TokenKind::LBrace,
                    '}' => TokenKind::RBrace,
                    '[' => TokenKind::LBracket,
                    ']' => TokenKind::RBracket,
                    _ => TokenKind::Comma,
                }
            }
            '"' => {
                cur.bump();
                let mut value = String::new();
                let mut closed = false;
                while let Some(c) = cur.bump() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => {
                            let esc_start = (cur.offset - 1, cur.line, cur.column - 1);
                            match cur.bump() {
                                Some(e @ ('"' | '\\')) => value.push(e),
                                Some(other) => {
                                    errors.push(ParseError::new(
                                        cur.span_from(esc_start),
                                        "escape `\\\"` or `\\\\`",
                                        format!("`\\{other}`"),
                                    ));
                                    value.push(other);
                                }
                                None => break,
                            }
                        }
                        other => value.push(other),
                    }
                }
                if !closed {
                    errors.push(ParseError::new(
                        cur.span_from(start),
                        "closing `\"`",
                        "end of input",
                    ));
                }
                TokenKind::Str(value)
            }
            c if is_ident_start(c) => {
                let mut value = String::new();
                while let Some(c) = cur.peek() {
                    if !is_ident_continue(c) {
                        break;
                    }
                    value.push(c);
                    cur.bump();
                }
                TokenKind::Ident(value)
            }
            other => {
                cur.bump();
                errors.push(ParseError::new(
                    cur.span_from(start),
                    "identifier, string or punctuation",
                    format!("character {other:?}"),
                ));
                continue;
            }
        };
        tokens.push(Token {
            kind,
            span: cur.span_from(start),
        });
    }

    let end = cur.mark();
    tokens.push(Token {
        kind: TokenKind::Eof,
        span: cur.span_from(end),
    });
    (tokens, errors)
}
