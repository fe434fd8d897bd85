use crate::ast::Span;

use super::{Diagnostic, DiagnosticKind};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Run of decimal digits, kept verbatim so bit strings keep leading zeros.
    Digits(String),
    Decimal(f64),
    And,
    Bar2,
    NotQ,
    LParen,
    RParen,
    LBrack,
    RBrack,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Semi,
    Eq,
    Le,
    Lt,
    Plus,
    Minus,
    Star,
    Slash,
    Bar,
    Approx,
    Tensor,
    FatArrow,
    Arrow,
    Iff,
    At,
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn lex(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut line_start = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            line += 1;
            i += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let span_to = |end: usize| Span {
            start,
            end,
            line,
            col: start - line_start + 1,
        };
        let rest = &src[i..];
        let fixed: &[(&str, Tok)] = &[
            ("(*)", Tok::Tensor),
            ("<=>", Tok::Iff),
            ("/\\", Tok::And),
            ("||", Tok::Bar2),
            ("~=", Tok::Approx),
            ("=>", Tok::FatArrow),
            ("->", Tok::Arrow),
            ("<=", Tok::Le),
        ];
        if let Some((s, t)) = fixed.iter().find(|(s, _)| rest.starts_with(s)) {
            i += s.len();
            out.push(Token {
                tok: t.clone(),
                span: span_to(i),
            });
            continue;
        }
        if rest.starts_with("!q")
            && !rest[2..]
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            i += 2;
            out.push(Token {
                tok: Tok::NotQ,
                span: span_to(i),
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                span: span_to(i),
            });
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_decimal = false;
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                is_decimal = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'-' || bytes[j] == b'+') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    is_decimal = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let tok = if is_decimal {
                Tok::Decimal(text.parse().map_err(|_| Diagnostic {
                    kind: DiagnosticKind::Lexical,
                    message: format!("malformed number `{text}`"),
                    span: span_to(i),
                })?)
            } else {
                Tok::Digits(text.to_string())
            };
            out.push(Token {
                tok,
                span: span_to(i),
            });
            continue;
        }
        let tok = match c {
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'[' => Tok::LBrack,
            b']' => Tok::RBrack,
            b'{' => Tok::LBrace,
            b'}' => Tok::RBrace,
            b',' => Tok::Comma,
            b':' => Tok::Colon,
            b';' => Tok::Semi,
            b'=' => Tok::Eq,
            b'<' => Tok::Lt,
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'|' => Tok::Bar,
            b'@' => Tok::At,
            _ => {
                let ch = rest.chars().next().unwrap_or('?');
                return Err(Diagnostic {
                    kind: DiagnosticKind::Lexical,
                    message: format!("unexpected character `{ch}`"),
                    span: span_to(i + ch.len_utf8()),
                });
            }
        };
        i += 1;
        out.push(Token {
            tok,
            span: span_to(i),
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span {
            start: src.len(),
            end: src.len(),
            line,
            col: src.len() - line_start + 1,
        },
    });
    Ok(out)
}
