//! Lexing, parsing, and pretty-printing for the surface language (`.krs`)
//! and the core language (`.kcl`).
//!
//! Both printers emit text that re-parses to a structurally identical AST.
//! Source positions are carried on every node for diagnostics but are not
//! part of structural equality.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

pub mod core_lang;
mod lexer;
pub mod surface;

pub use core_lang::{parse_core, pretty_core, ArithOp, CoreExp, CoreKind, CoreProgram, Offset, Order};
pub use surface::{
    parse_surface, pretty_surface, BinOp, Exp, ExpKind, FieldIndex, FnDef, SurfaceProgram,
    TypeDecl,
};

/// 1-based line/column position in source text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub pos: Pos,
    /// Tokens that would have been accepted at `pos`.
    pub expected: Vec<String>,
    pub found: String,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(pos: Pos, message: &str) -> Self {
        ParseError { pos, expected: Vec::new(), found: String::new(), message: message.to_string() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.pos)?;
        if !self.message.is_empty() {
            return f.write_str(&self.message);
        }
        match self.expected.as_slice() {
            [] => write!(f, "unexpected {}", self.found),
            [one] => write!(f, "expected {one}, found {}", self.found),
            many => write!(f, "expected one of {}, found {}", many.join(", "), self.found),
        }
    }
}

impl core::error::Error for ParseError {}
