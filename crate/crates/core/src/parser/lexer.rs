use std::collections::BTreeMap;

use super::ast::{Diagnostic, Pos};
use super::expr::Unit;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Num(f64, Option<Unit>),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eq,
    Dot,
    DotDot,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Num(v, u) => format!("number `{v}{}`", u.map_or("", |u| u.as_str())),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Dot => "`.`".into(),
            Tok::DotDot => "`..`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

/// Tokens plus trailing comments keyed by line (comment text trimmed).
#[derive(Debug)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub comments: BTreeMap<usize, String>,
}

pub fn lex(src: &str) -> Result<Lexed, Diagnostic> {
    let mut tokens = Vec::new();
    let mut comments = BTreeMap::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! bump {
        () => {{
            let c = chars[i];
            i += 1;
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos::new(line, col);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' {
            let start = i + 1;
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            let text: String = chars[start..i].iter().collect();
            comments.insert(pos.line, text.trim().to_string());
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            tokens.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), pos });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            // a lone `.` followed by a digit is a fraction; `..` is a range
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                bump!();
                while i < chars.len() && chars[i].is_ascii_digit() {
                    bump!();
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while i < j {
                        bump!();
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        bump!();
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value: f64 = text.parse().map_err(|_| Diagnostic::error(pos, format!("malformed number `{text}`")))?;
            let mut unit = None;
            if i < chars.len() && chars[i].is_ascii_alphabetic() {
                let upos = Pos::new(line, col);
                let ustart = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    bump!();
                }
                let u: String = chars[ustart..i].iter().collect();
                unit = Some(Unit::parse(&u).ok_or_else(|| {
                    Diagnostic::error(upos, format!("unknown unit `{u}` (expected us, ms, s, B, KB or MB)"))
                })?);
            }
            tokens.push(Token { tok: Tok::Num(value, unit), pos });
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() || chars[i] == '\n' {
                    return Err(Diagnostic::error(pos, "unterminated string"));
                }
                let ch = bump!();
                match ch {
                    '"' => break,
                    '\\' if i < chars.len() && (chars[i] == '"' || chars[i] == '\\') => s.push(bump!()),
                    _ => s.push(ch),
                }
            }
            tokens.push(Token { tok: Tok::Str(s), pos });
            continue;
        }
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ',' => Tok::Comma,
            '=' => Tok::Eq,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '.' => {
                if i + 1 < chars.len() && chars[i + 1] == '.' {
                    bump!();
                    Tok::DotDot
                } else {
                    Tok::Dot
                }
            }
            other => return Err(Diagnostic::error(pos, format!("unexpected character `{other}`"))),
        };
        bump!();
        tokens.push(Token { tok, pos });
    }
    tokens.push(Token { tok: Tok::Eof, pos: Pos::new(line, col) });
    Ok(Lexed { tokens, comments })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        lex(src).unwrap().tokens.into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn ranges_and_fractions() {
        assert_eq!(
            toks("1..P-1 0.1us worker.0"),
            vec![
                Tok::Num(1.0, None),
                Tok::DotDot,
                Tok::Ident("P".into()),
                Tok::Minus,
                Tok::Num(1.0, None),
                Tok::Num(0.1, Some(Unit::Us)),
                Tok::Ident("worker".into()),
                Tok::Dot,
                Tok::Num(0.0, None),
                Tok::Eof,
            ]
        );
        assert_eq!(toks("1e6 2KB"), vec![Tok::Num(1e6, None), Tok::Num(2.0, Some(Unit::Kb)), Tok::Eof]);
    }

    #[test]
    fn comments_and_positions() {
        let l = lex("action \"a\" cost 1us # note here\n  wait h").unwrap();
        assert_eq!(l.comments.get(&1).map(String::as_str), Some("note here"));
        let wait = &l.tokens[4];
        assert_eq!((wait.pos.line, wait.pos.col), (2, 3));
    }

    #[test]
    fn bad_input() {
        assert!(lex("5kb").is_err());
        assert!(lex("\"open").is_err());
        let err = lex("a $").unwrap_err();
        assert_eq!((err.line, err.column), (1, 3));
    }
}
