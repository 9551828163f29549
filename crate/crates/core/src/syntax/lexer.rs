use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::{ParseError, Pos};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    /// `'a`
    Lifetime(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Dot,
    /// `:=`
    Assign,
    /// `:=:`
    Decl,
    Plus,
    Minus,
    Star,
    Amp,
    /// `=` (surface equality)
    Eq,
    /// `==`
    EqEq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Lifetime(s) => write!(f, "`'{s}`"),
            Tok::Eof => f.write_str("end of input"),
            other => write!(f, "`{}`", other.symbol()),
        }
    }
}

impl Tok {
    pub fn symbol(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Dot => ".",
            Tok::Assign => ":=",
            Tok::Decl => ":=:",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Amp => "&",
            Tok::Eq => "=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::Ident(_) => "identifier",
            Tok::Int(_) => "integer",
            Tok::Str(_) => "string",
            Tok::Lifetime(_) => "lifetime",
            Tok::Eof => "end of input",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

fn ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

/// Splits source text into tokens. Identifiers follow `[A-Za-z_][A-Za-z0-9_']*`;
/// a leading `#` marks a generated identifier (`#anonymous0`). `//` starts a
/// line comment.
pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let pos = Pos { line, col };
        let peek = |k: usize| chars.get(i + k).copied();

        if ident_start(c) || (c == '#' && peek(1).is_some_and(ident_start)) {
            let mut s = String::new();
            s.push(c);
            bump!();
            while i < chars.len() && ident_continue(chars[i]) {
                s.push(chars[i]);
                bump!();
            }
            out.push(Token { tok: Tok::Ident(s), pos });
            continue;
        }
        if c.is_ascii_digit() {
            let mut n: i64 = 0;
            while i < chars.len() && chars[i].is_ascii_digit() {
                let d = chars[i] as i64 - '0' as i64;
                n = n
                    .checked_mul(10)
                    .and_then(|n| n.checked_add(d))
                    .ok_or_else(|| ParseError::new(pos, "integer literal out of range"))?;
                bump!();
            }
            out.push(Token { tok: Tok::Int(n), pos });
            continue;
        }
        if c == '\'' {
            if !peek(1).is_some_and(ident_start) {
                return Err(ParseError::new(pos, "expected a lifetime name after `'`"));
            }
            bump!();
            let mut s = String::new();
            while i < chars.len() && ident_continue(chars[i]) && chars[i] != '\'' {
                s.push(chars[i]);
                bump!();
            }
            out.push(Token { tok: Tok::Lifetime(s), pos });
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                match chars.get(i).copied() {
                    None => return Err(ParseError::new(pos, "unterminated string literal")),
                    Some('"') => {
                        bump!();
                        break;
                    }
                    Some('\\') => {
                        bump!();
                        let esc = chars.get(i).copied().ok_or_else(|| {
                            ParseError::new(pos, "unterminated string literal")
                        })?;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        bump!();
                    }
                    Some(ch) => {
                        s.push(ch);
                        bump!();
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), pos });
            continue;
        }

        let (tok, len) = match (c, peek(1), peek(2)) {
            (':', Some('='), Some(':')) => (Tok::Decl, 3),
            (':', Some('='), _) => (Tok::Assign, 2),
            ('=', Some('='), _) => (Tok::EqEq, 2),
            ('!', Some('='), _) => (Tok::Ne, 2),
            ('<', Some('='), _) => (Tok::Le, 2),
            ('>', Some('='), _) => (Tok::Ge, 2),
            ('=', _, _) => (Tok::Eq, 1),
            ('<', _, _) => (Tok::Lt, 1),
            ('>', _, _) => (Tok::Gt, 1),
            ('(', _, _) => (Tok::LParen, 1),
            (')', _, _) => (Tok::RParen, 1),
            ('{', _, _) => (Tok::LBrace, 1),
            ('}', _, _) => (Tok::RBrace, 1),
            (',', _, _) => (Tok::Comma, 1),
            (';', _, _) => (Tok::Semi, 1),
            ('.', _, _) => (Tok::Dot, 1),
            ('+', _, _) => (Tok::Plus, 1),
            ('-', _, _) => (Tok::Minus, 1),
            ('*', _, _) => (Tok::Star, 1),
            ('&', _, _) => (Tok::Amp, 1),
            _ => {
                return Err(ParseError::new(
                    pos,
                    &alloc::format!("unexpected character {c:?}"),
                ))
            }
        };
        for _ in 0..len {
            bump!();
        }
        out.push(Token { tok, pos });
    }
    out.push(Token { tok: Tok::Eof, pos: Pos { line, col } });
    Ok(out)
}

/// Cursor over a token stream shared by both parsers.
pub struct Cursor {
    toks: Vec<Token>,
    at: usize,
}

impl Cursor {
    pub fn new(toks: Vec<Token>) -> Self {
        Cursor { toks, at: 0 }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    pub fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    pub fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    pub fn is(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat(&mut self, t: &Tok) -> bool {
        if self.is(t) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, t: &Tok) -> Result<Pos, ParseError> {
        if self.is(t) {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&[t.to_string()]))
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> Result<Pos, ParseError> {
        if self.is_kw(kw) {
            Ok(self.bump().pos)
        } else {
            Err(self.unexpected(&[alloc::format!("`{kw}`")]))
        }
    }

    pub fn expect_int(&mut self) -> Result<i64, ParseError> {
        match *self.peek() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.unexpected(&["integer".to_string()])),
        }
    }

    pub fn unexpected(&self, expected: &[String]) -> ParseError {
        ParseError {
            pos: self.pos(),
            expected: expected.to_vec(),
            found: self.peek().to_string(),
            message: String::new(),
        }
    }
}
