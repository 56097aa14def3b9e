//! Tokenizer for the DC-ProbLog concrete syntax.

use super::Num;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    LowerIdent(String),
    UpperIdent(String),
    Number(Num),
    Dot,
    Comma,
    Semicolon,
    Colon,
    DoubleColon,
    ColonDash,
    Tilde,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Gt,
    Leq,
    Geq,
    EqArith,
    NeqArith,
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::LowerIdent(s) | Tok::UpperIdent(s) => write!(f, "{s}"),
            Tok::Number(n) => write!(f, "{n}"),
            Tok::Dot => write!(f, "."),
            Tok::Comma => write!(f, ","),
            Tok::Semicolon => write!(f, ";"),
            Tok::Colon => write!(f, ":"),
            Tok::DoubleColon => write!(f, "::"),
            Tok::ColonDash => write!(f, ":-"),
            Tok::Tilde => write!(f, "~"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::LBracket => write!(f, "["),
            Tok::RBracket => write!(f, "]"),
            Tok::Plus => write!(f, "+"),
            Tok::Minus => write!(f, "-"),
            Tok::Star => write!(f, "*"),
            Tok::Slash => write!(f, "/"),
            Tok::Lt => write!(f, "<"),
            Tok::Gt => write!(f, ">"),
            Tok::Leq => write!(f, "=<"),
            Tok::Geq => write!(f, ">="),
            Tok::EqArith => write!(f, "=:="),
            Tok::NeqArith => write!(f, "=\\="),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

/// A token with its source position (1-based line and column).
#[derive(Debug, Clone)]
pub struct Spanned {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug)]
pub struct LexError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

pub fn tokenize(text: &str) -> Result<Vec<Spanned>, LexError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! push {
        ($tok:expr, $l:expr, $c:expr) => {
            out.push(Spanned {
                tok: $tok,
                line: $l,
                col: $c,
            })
        };
    }

    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut u32| {
            *i += n;
            *col += n as u32;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => advance(1, &mut i, &mut col),
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => {
                push!(Tok::LParen, l0, c0);
                advance(1, &mut i, &mut col)
            }
            ')' => {
                push!(Tok::RParen, l0, c0);
                advance(1, &mut i, &mut col)
            }
            '[' => {
                push!(Tok::LBracket, l0, c0);
                advance(1, &mut i, &mut col)
            }
            ']' => {
                push!(Tok::RBracket, l0, c0);
                advance(1, &mut i, &mut col)
            }
            ',' => {
                push!(Tok::Comma, l0, c0);
                advance(1, &mut i, &mut col)
            }
            ';' => {
                push!(Tok::Semicolon, l0, c0);
                advance(1, &mut i, &mut col)
            }
            '~' => {
                push!(Tok::Tilde, l0, c0);
                advance(1, &mut i, &mut col)
            }
            '+' => {
                push!(Tok::Plus, l0, c0);
                advance(1, &mut i, &mut col)
            }
            '-' => {
                push!(Tok::Minus, l0, c0);
                advance(1, &mut i, &mut col)
            }
            '*' => {
                push!(Tok::Star, l0, c0);
                advance(1, &mut i, &mut col)
            }
            '/' => {
                push!(Tok::Slash, l0, c0);
                advance(1, &mut i, &mut col)
            }
            '<' => {
                push!(Tok::Lt, l0, c0);
                advance(1, &mut i, &mut col)
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    push!(Tok::Geq, l0, c0);
                    advance(2, &mut i, &mut col);
                } else {
                    push!(Tok::Gt, l0, c0);
                    advance(1, &mut i, &mut col);
                }
            }
            '=' => {
                if chars.get(i + 1) == Some(&'<') {
                    push!(Tok::Leq, l0, c0);
                    advance(2, &mut i, &mut col);
                } else if chars.get(i + 1) == Some(&':') && chars.get(i + 2) == Some(&'=') {
                    push!(Tok::EqArith, l0, c0);
                    advance(3, &mut i, &mut col);
                } else if chars.get(i + 1) == Some(&'\\') && chars.get(i + 2) == Some(&'=') {
                    push!(Tok::NeqArith, l0, c0);
                    advance(3, &mut i, &mut col);
                } else {
                    return Err(LexError {
                        line: l0,
                        col: c0,
                        message: "expected one of `=<`, `=:=`, `=\\=` after `=`".into(),
                    });
                }
            }
            ':' => {
                if chars.get(i + 1) == Some(&':') {
                    push!(Tok::DoubleColon, l0, c0);
                    advance(2, &mut i, &mut col);
                } else if chars.get(i + 1) == Some(&'-') {
                    push!(Tok::ColonDash, l0, c0);
                    advance(2, &mut i, &mut col);
                } else {
                    push!(Tok::Colon, l0, c0);
                    advance(1, &mut i, &mut col);
                }
            }
            '.' => {
                push!(Tok::Dot, l0, c0);
                advance(1, &mut i, &mut col)
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(1, &mut i, &mut col);
                }
                let mut is_float = false;
                // A `.` only belongs to the number when a digit follows;
                // otherwise it terminates the statement (`poisson(20).`).
                if i < chars.len()
                    && chars[i] == '.'
                    && chars.get(i + 1).is_some_and(|c| c.is_ascii_digit())
                {
                    is_float = true;
                    advance(1, &mut i, &mut col);
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance(1, &mut i, &mut col);
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if chars.get(j) == Some(&'+') || chars.get(j) == Some(&'-') {
                        j += 1;
                    }
                    if chars.get(j).is_some_and(|c| c.is_ascii_digit()) {
                        is_float = true;
                        let exp_len = j - i;
                        advance(exp_len, &mut i, &mut col);
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            advance(1, &mut i, &mut col);
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let num = if is_float {
                    Num::Float(s.parse().map_err(|_| LexError {
                        line: l0,
                        col: c0,
                        message: format!("invalid number `{s}`"),
                    })?)
                } else {
                    Num::Int(s.parse().map_err(|_| LexError {
                        line: l0,
                        col: c0,
                        message: format!("integer `{s}` out of range"),
                    })?)
                };
                push!(Tok::Number(num), l0, c0);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_')
                {
                    advance(1, &mut i, &mut col);
                }
                let s: String = chars[start..i].iter().collect();
                if c.is_ascii_uppercase() || c == '_' {
                    push!(Tok::UpperIdent(s), l0, c0);
                } else {
                    push!(Tok::LowerIdent(s), l0, c0);
                }
            }
            other => {
                return Err(LexError {
                    line: l0,
                    col: c0,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}
