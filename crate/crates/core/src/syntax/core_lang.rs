//! Core language: closures, applications, explicit memory operations.
//!
//! A program is a `;`-separated list of items, typically function
//! definitions followed by a call:
//!
//! ```text
//! fn id (x){ x }; id(7)
//! ```
//!
//! `let x = e1 in e2` is sugar for `(fn (x){e2})(e1)` and is rewritten while
//! parsing.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use super::lexer::{tokenize, Cursor, Tok};
use super::{ParseError, Pos};

/// Memory ordering of a deref or memory assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    /// non-atomic
    Na,
    /// atomic
    At,
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Order::Na => "na",
            Order::At => "at",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Mod,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Mod => "mod",
            ArithOp::Eq => "==",
            ArithOp::Ne => "!=",
            ArithOp::Lt => "<",
            ArithOp::Gt => ">",
            ArithOp::Le => "<=",
            ArithOp::Ge => ">=",
        }
    }

    pub fn is_comparison(self) -> bool {
        !matches!(self, ArithOp::Add | ArithOp::Sub | ArithOp::Mul | ArithOp::Mod)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Offset {
    Const(u64),
    Dyn(Box<CoreExp>),
}

#[derive(Clone, Debug)]
pub struct CoreExp {
    pub kind: CoreKind,
    pub pos: Pos,
}

impl PartialEq for CoreExp {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}
impl Eq for CoreExp {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoreKind {
    Ident(String),
    Int(i64),
    Str(String),
    /// `clskip`
    Skip,
    Deref(Order, Box<CoreExp>),
    Arith(ArithOp, Box<CoreExp>, Box<CoreExp>),
    Case(Box<CoreExp>, Vec<CoreExp>),
    FnDef { name: String, params: Vec<String>, body: Box<CoreExp> },
    AnonFn { params: Vec<String>, body: Box<CoreExp> },
    Apply(Box<CoreExp>, Vec<CoreExp>),
    /// Always wraps an `Apply`.
    TailCall(Box<CoreExp>),
    Fork(Box<CoreExp>),
    EnvAssign(String, Box<CoreExp>),
    MemAssign(Box<CoreExp>, Order, Box<CoreExp>),
    Field(Box<CoreExp>, Offset),
    Allocate(Box<CoreExp>),
    Seq(Box<CoreExp>, Box<CoreExp>),
    /// `cas(loc, expected, new)`
    Cas(Box<CoreExp>, Box<CoreExp>, Box<CoreExp>),
    Append(Box<CoreExp>, Box<CoreExp>),
    Free(Box<CoreExp>),
}

impl CoreExp {
    pub fn new(kind: CoreKind, pos: Pos) -> Self {
        CoreExp { kind, pos }
    }

    /// Node with a default position, for generated code.
    pub fn gen(kind: CoreKind) -> Self {
        CoreExp { kind, pos: Pos::default() }
    }

    pub fn seq(a: CoreExp, b: CoreExp) -> Self {
        CoreExp::gen(CoreKind::Seq(Box::new(a), Box::new(b)))
    }

    pub fn apply(f: CoreExp, args: Vec<CoreExp>) -> Self {
        CoreExp::gen(CoreKind::Apply(Box::new(f), args))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoreProgram {
    pub items: Vec<CoreExp>,
}

impl CoreProgram {
    /// The whole program as one expression (items joined by `;`), or `None`
    /// for an empty program.
    pub fn to_exp(&self) -> Option<CoreExp> {
        let mut it = self.items.iter().rev();
        let mut acc = it.next()?.clone();
        for e in it {
            acc = CoreExp::new(CoreKind::Seq(Box::new(e.clone()), Box::new(acc)), e.pos);
        }
        Some(acc)
    }
}

const KEYWORDS: &[&str] = &[
    "fn", "case", "of", "fork", "allocate", "tailcall", "cas", "append", "free", "let", "in", "na",
    "at", "clskip", "mod",
];

pub fn parse_core(text: &str) -> Result<CoreProgram, ParseError> {
    let mut p = Parser { c: Cursor::new(tokenize(text)?) };
    let mut items = Vec::new();
    while !p.c.is(&Tok::Eof) {
        items.push(p.item()?);
        if !p.c.eat(&Tok::Semi) {
            break;
        }
    }
    if !p.c.is(&Tok::Eof) {
        return Err(p.c.unexpected(&["`;`".into(), "end of input".into()]));
    }
    Ok(CoreProgram { items })
}

struct Parser {
    c: Cursor,
}

impl Parser {
    fn ident(&mut self) -> Result<String, ParseError> {
        match self.c.peek() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.c.bump();
                Ok(s)
            }
            _ => Err(self.c.unexpected(&["identifier".into()])),
        }
    }

    fn order(&mut self) -> Result<Order, ParseError> {
        if self.c.eat_kw("na") {
            Ok(Order::Na)
        } else if self.c.eat_kw("at") {
            Ok(Order::At)
        } else {
            Err(self.c.unexpected(&["`na`".into(), "`at`".into()]))
        }
    }

    fn at_exp_end(&self) -> bool {
        matches!(self.c.peek(), Tok::RBrace | Tok::RParen | Tok::Comma | Tok::Eof)
    }

    fn exp(&mut self) -> Result<CoreExp, ParseError> {
        let first = self.item()?;
        if self.c.is(&Tok::Semi) {
            let pos = self.c.bump().pos;
            if self.at_exp_end() {
                return Ok(first);
            }
            let rest = self.exp()?;
            return Ok(CoreExp::new(CoreKind::Seq(Box::new(first), Box::new(rest)), pos));
        }
        Ok(first)
    }

    fn item(&mut self) -> Result<CoreExp, ParseError> {
        let pos = self.c.pos();
        if self.c.eat_kw("let") {
            let x = self.ident()?;
            self.c.expect(&Tok::Eq)?;
            let init = self.cmp()?;
            self.c.expect_kw("in")?;
            let body = self.exp()?;
            let f = CoreExp::new(CoreKind::AnonFn { params: vec![x], body: Box::new(body) }, pos);
            return Ok(CoreExp::new(CoreKind::Apply(Box::new(f), vec![init]), pos));
        }
        let lhs = self.cmp()?;
        if !self.c.is(&Tok::Assign) {
            return Ok(lhs);
        }
        let apos = self.c.bump().pos;
        let order = if self.c.is_kw("na") || self.c.is_kw("at") { Some(self.order()?) } else { None };
        let rhs = Box::new(self.cmp()?);
        match order {
            Some(o) => Ok(CoreExp::new(CoreKind::MemAssign(Box::new(lhs), o, rhs), apos)),
            None => match lhs.kind {
                CoreKind::Ident(x) => Ok(CoreExp::new(CoreKind::EnvAssign(x, rhs), apos)),
                _ => Err(ParseError::new(lhs.pos, "environment assignment needs an identifier")),
            },
        }
    }

    fn cmp(&mut self) -> Result<CoreExp, ParseError> {
        let lhs = self.add()?;
        let op = match self.c.peek() {
            Tok::EqEq => ArithOp::Eq,
            Tok::Ne => ArithOp::Ne,
            Tok::Lt => ArithOp::Lt,
            Tok::Gt => ArithOp::Gt,
            Tok::Le => ArithOp::Le,
            Tok::Ge => ArithOp::Ge,
            _ => return Ok(lhs),
        };
        let pos = self.c.bump().pos;
        let rhs = self.add()?;
        Ok(CoreExp::new(CoreKind::Arith(op, Box::new(lhs), Box::new(rhs)), pos))
    }

    fn add(&mut self) -> Result<CoreExp, ParseError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.c.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.c.bump().pos;
            let rhs = self.mul()?;
            lhs = CoreExp::new(CoreKind::Arith(op, Box::new(lhs), Box::new(rhs)), pos);
        }
    }

    fn mul(&mut self) -> Result<CoreExp, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.c.is(&Tok::Star) {
                ArithOp::Mul
            } else if self.c.is_kw("mod") {
                ArithOp::Mod
            } else {
                return Ok(lhs);
            };
            let pos = self.c.bump().pos;
            let rhs = self.unary()?;
            lhs = CoreExp::new(CoreKind::Arith(op, Box::new(lhs), Box::new(rhs)), pos);
        }
    }

    fn unary(&mut self) -> Result<CoreExp, ParseError> {
        let pos = self.c.pos();
        if self.c.eat(&Tok::Star) {
            let o = self.order()?;
            let e = self.unary()?;
            return Ok(CoreExp::new(CoreKind::Deref(o, Box::new(e)), pos));
        }
        self.postfix()
    }

    fn args(&mut self) -> Result<Vec<CoreExp>, ParseError> {
        let mut out = Vec::new();
        if self.c.is(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            out.push(self.exp()?);
            if !self.c.eat(&Tok::Comma) {
                return Ok(out);
            }
        }
    }

    fn postfix(&mut self) -> Result<CoreExp, ParseError> {
        let mut e = self.primary()?;
        loop {
            let pos = self.c.pos();
            if self.c.eat(&Tok::LParen) {
                let args = self.args()?;
                self.c.expect(&Tok::RParen)?;
                e = CoreExp::new(CoreKind::Apply(Box::new(e), args), pos);
            } else if self.c.eat(&Tok::Dot) {
                let off = if self.c.eat(&Tok::LParen) {
                    let i = self.exp()?;
                    self.c.expect(&Tok::RParen)?;
                    Offset::Dyn(Box::new(i))
                } else {
                    let n = self.c.expect_int()?;
                    Offset::Const(n as u64)
                };
                e = CoreExp::new(CoreKind::Field(Box::new(e), off), pos);
            } else {
                return Ok(e);
            }
        }
    }

    fn params(&mut self) -> Result<Vec<String>, ParseError> {
        self.c.expect(&Tok::LParen)?;
        let mut ps = Vec::new();
        if !self.c.is(&Tok::RParen) {
            loop {
                ps.push(self.ident()?);
                if !self.c.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.c.expect(&Tok::RParen)?;
        Ok(ps)
    }

    fn braced(&mut self) -> Result<CoreExp, ParseError> {
        self.c.expect(&Tok::LBrace)?;
        let e = self.exp()?;
        self.c.expect(&Tok::RBrace)?;
        Ok(e)
    }

    fn paren_args<const N: usize>(&mut self) -> Result<[Box<CoreExp>; N], ParseError> {
        self.c.expect(&Tok::LParen)?;
        let mut v = Vec::with_capacity(N);
        for i in 0..N {
            if i > 0 {
                self.c.expect(&Tok::Comma)?;
            }
            v.push(Box::new(self.exp()?));
        }
        self.c.expect(&Tok::RParen)?;
        Ok(v.try_into().unwrap_or_else(|_| unreachable!()))
    }

    fn primary(&mut self) -> Result<CoreExp, ParseError> {
        let pos = self.c.pos();
        let kind = match self.c.peek().clone() {
            Tok::Int(n) => {
                self.c.bump();
                CoreKind::Int(n)
            }
            Tok::Str(s) => {
                self.c.bump();
                CoreKind::Str(s)
            }
            Tok::LParen => {
                self.c.bump();
                let e = self.exp()?;
                self.c.expect(&Tok::RParen)?;
                return Ok(e);
            }
            Tok::Ident(s) => {
                match s.as_str() {
                    "clskip" => {
                        self.c.bump();
                        CoreKind::Skip
                    }
                    "fn" => {
                        self.c.bump();
                        let name = if matches!(self.c.peek(), Tok::Ident(_)) {
                            Some(self.ident()?)
                        } else {
                            None
                        };
                        let params = self.params()?;
                        let body = Box::new(self.braced()?);
                        match name {
                            Some(name) => CoreKind::FnDef { name, params, body },
                            None => CoreKind::AnonFn { params, body },
                        }
                    }
                    "case" => {
                        self.c.bump();
                        let scrut = self.cmp()?;
                        self.c.expect_kw("of")?;
                        self.c.expect(&Tok::LBrace)?;
                        let mut arms = Vec::new();
                        loop {
                            arms.push(self.exp()?);
                            if !self.c.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.c.expect(&Tok::RBrace)?;
                        CoreKind::Case(Box::new(scrut), arms)
                    }
                    "fork" => {
                        self.c.bump();
                        CoreKind::Fork(Box::new(self.braced()?))
                    }
                    "allocate" => {
                        self.c.bump();
                        let [e] = self.paren_args::<1>()?;
                        CoreKind::Allocate(e)
                    }
                    "free" => {
                        self.c.bump();
                        let [e] = self.paren_args::<1>()?;
                        CoreKind::Free(e)
                    }
                    "append" => {
                        self.c.bump();
                        let [a, b] = self.paren_args::<2>()?;
                        CoreKind::Append(a, b)
                    }
                    "cas" => {
                        self.c.bump();
                        let [a, b, c] = self.paren_args::<3>()?;
                        CoreKind::Cas(a, b, c)
                    }
                    "tailcall" => {
                        self.c.bump();
                        let [e] = self.paren_args::<1>()?;
                        if !matches!(e.kind, CoreKind::Apply(..)) {
                            return Err(ParseError::new(e.pos, "tailcall expects an application"));
                        }
                        CoreKind::TailCall(e)
                    }
                    _ => CoreKind::Ident(self.ident()?),
                }
            }
            _ => {
                return Err(self.c.unexpected(&[
                    "integer".into(),
                    "identifier".into(),
                    "`(`".into(),
                    "`fn`".into(),
                ]))
            }
        };
        Ok(CoreExp::new(kind, pos))
    }
}

// ---- pretty printing ----

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Seq,
    Item,
    Cmp,
    Add,
    Mul,
    Unary,
    Postfix,
}

fn prec_of(e: &CoreExp) -> Prec {
    match &e.kind {
        CoreKind::Seq(..) => Prec::Seq,
        CoreKind::EnvAssign(..) | CoreKind::MemAssign(..) => Prec::Item,
        CoreKind::Arith(op, ..) if op.is_comparison() => Prec::Cmp,
        CoreKind::Arith(ArithOp::Add | ArithOp::Sub, ..) => Prec::Add,
        CoreKind::Arith(..) => Prec::Mul,
        CoreKind::Deref(..) => Prec::Unary,
        CoreKind::Int(n) if *n < 0 => Prec::Add,
        _ => Prec::Postfix,
    }
}

fn write_str_lit(out: &mut String, s: &str) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
}

struct Printer {
    out: String,
}

impl Printer {
    fn at(&mut self, e: &CoreExp, min: Prec) {
        if prec_of(e) < min {
            self.out.push('(');
            self.exp(e);
            self.out.push(')');
        } else {
            self.exp(e);
        }
    }

    fn list(&mut self, es: &[CoreExp]) {
        for (i, e) in es.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.at(e, Prec::Seq);
        }
    }

    fn fn_tail(&mut self, params: &[String], body: &CoreExp) {
        let _ = write!(self.out, "({}) {{ ", params.join(", "));
        self.exp(body);
        self.out.push_str(" }");
    }

    fn exp(&mut self, e: &CoreExp) {
        match &e.kind {
            CoreKind::Ident(x) => self.out.push_str(x),
            CoreKind::Int(n) if *n < 0 => {
                let _ = write!(self.out, "0 - {}", n.unsigned_abs());
            }
            CoreKind::Int(n) => {
                let _ = write!(self.out, "{n}");
            }
            CoreKind::Str(s) => write_str_lit(&mut self.out, s),
            CoreKind::Skip => self.out.push_str("clskip"),
            CoreKind::Deref(o, inner) => {
                let _ = write!(self.out, "*{o} ");
                self.at(inner, Prec::Unary);
            }
            CoreKind::Arith(op, l, r) => {
                let (lp, rp) = match prec_of(e) {
                    Prec::Cmp => (Prec::Add, Prec::Add),
                    Prec::Add => (Prec::Add, Prec::Mul),
                    _ => (Prec::Mul, Prec::Unary),
                };
                self.at(l, lp);
                let _ = write!(self.out, " {} ", op.symbol());
                self.at(r, rp);
            }
            CoreKind::Case(s, arms) => {
                self.out.push_str("case ");
                self.at(s, Prec::Cmp);
                self.out.push_str(" of {");
                self.list(arms);
                self.out.push('}');
            }
            CoreKind::FnDef { name, params, body } => {
                let _ = write!(self.out, "fn {name} ");
                self.fn_tail(params, body);
            }
            CoreKind::AnonFn { params, body } => {
                self.out.push_str("fn ");
                self.fn_tail(params, body);
            }
            CoreKind::Apply(f, args) => {
                if matches!(f.kind, CoreKind::FnDef { .. } | CoreKind::AnonFn { .. }) {
                    self.out.push('(');
                    self.exp(f);
                    self.out.push(')');
                } else {
                    self.at(f, Prec::Postfix);
                }
                self.out.push('(');
                self.list(args);
                self.out.push(')');
            }
            CoreKind::TailCall(inner) => {
                self.out.push_str("tailcall(");
                self.exp(inner);
                self.out.push(')');
            }
            CoreKind::Fork(inner) => {
                self.out.push_str("fork{");
                self.exp(inner);
                self.out.push('}');
            }
            CoreKind::EnvAssign(x, rhs) => {
                let _ = write!(self.out, "{x} := ");
                self.at(rhs, Prec::Cmp);
            }
            CoreKind::MemAssign(l, o, r) => {
                self.at(l, Prec::Cmp);
                let _ = write!(self.out, " :={o} ");
                self.at(r, Prec::Cmp);
            }
            CoreKind::Field(base, off) => {
                self.at(base, Prec::Postfix);
                match off {
                    Offset::Const(n) => {
                        let _ = write!(self.out, ".{n}");
                    }
                    Offset::Dyn(i) => {
                        self.out.push_str(".(");
                        self.exp(i);
                        self.out.push(')');
                    }
                }
            }
            CoreKind::Allocate(n) => {
                self.out.push_str("allocate(");
                self.exp(n);
                self.out.push(')');
            }
            CoreKind::Seq(a, b) => {
                self.at(a, Prec::Item);
                self.out.push_str("; ");
                self.at(b, Prec::Seq);
            }
            CoreKind::Cas(a, b, c) => {
                self.out.push_str("cas(");
                self.list(&[(**a).clone(), (**b).clone(), (**c).clone()]);
                self.out.push(')');
            }
            CoreKind::Append(a, b) => {
                self.out.push_str("append(");
                self.list(&[(**a).clone(), (**b).clone()]);
                self.out.push(')');
            }
            CoreKind::Free(a) => {
                self.out.push_str("free(");
                self.exp(a);
                self.out.push(')');
            }
        }
    }
}

pub fn pretty_core(p: &CoreProgram) -> String {
    let mut pr = Printer { out: String::new() };
    for (i, item) in p.items.iter().enumerate() {
        if i > 0 {
            pr.out.push_str(";\n");
        }
        pr.at(item, Prec::Item);
    }
    if !p.items.is_empty() {
        pr.out.push('\n');
    }
    pr.out
}

pub fn pretty_core_exp(e: &CoreExp) -> String {
    let mut pr = Printer { out: String::new() };
    pr.exp(e);
    pr.out
}

impl fmt::Display for CoreExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_core_exp(self))
    }
}
