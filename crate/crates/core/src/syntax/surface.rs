//! Surface language: type declarations followed by function definitions.
//!
//! ```text
//! Queue :=: prodTy(i32,i32,i32,own(array(i32)))
//! main  :=: fnTy(;;void)
//! fun main() newlft
//!   let mut q = new(ty(Queue)) in { q.1 := 5; ... }
//! endlft
//! ```

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::lexer::{tokenize, Cursor, Tok};
use super::{ParseError, Pos};
use crate::types::{FnTy, Lifetime, Mutability, RType};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SurfaceProgram {
    pub decls: Vec<TypeDecl>,
    pub fns: Vec<FnDef>,
}

#[derive(Clone, Debug)]
pub struct TypeDecl {
    pub name: String,
    pub ty: RType,
    pub pos: Pos,
}

impl PartialEq for TypeDecl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.ty == other.ty
    }
}
impl Eq for TypeDecl {}

#[derive(Clone, Debug)]
pub struct FnDef {
    pub name: String,
    pub params: Vec<String>,
    /// Optional `ret Ident` clause; carried through but not interpreted.
    pub ret: Option<String>,
    pub body: Exp,
    pub pos: Pos,
}

impl PartialEq for FnDef {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.params == other.params
            && self.ret == other.ret
            && self.body == other.body
    }
}
impl Eq for FnDef {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Mod,
    Eq,
    Gt,
    Lt,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Mod => "mod",
            BinOp::Eq => "=",
            BinOp::Gt => ">",
            BinOp::Lt => "<",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Gt | BinOp::Lt)
    }
}

/// Field selector: `.3` or `.(e)` (the latter indexes arrays).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FieldIndex {
    Const(u32),
    Dyn(Box<Exp>),
}

#[derive(Clone, Debug)]
pub struct Exp {
    pub kind: ExpKind,
    pub pos: Pos,
}

impl PartialEq for Exp {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}
impl Eq for Exp {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExpKind {
    Int(i64),
    Bool(bool),
    Void,
    Var(String),
    Deref(Box<Exp>),
    Field(Box<Exp>, FieldIndex),
    Binary(BinOp, Box<Exp>, Box<Exp>),
    Borrow(Mutability, Box<Exp>),
    /// `new(T)` or `new(T, n)`.
    New(RType, Option<Box<Exp>>),
    Assign(Box<Exp>, Box<Exp>),
    /// `lhs :=inj tag rhs`, tag is 1-based.
    Inj(Box<Exp>, u32, Box<Exp>),
    Let {
        mutability: Mutability,
        name: String,
        init: Option<Box<Exp>>,
        body: Option<Box<Exp>>,
    },
    Block(Box<Exp>),
    Seq(Box<Exp>, Box<Exp>),
    If(Box<Exp>, Box<Exp>, Box<Exp>),
    Case(Box<Exp>, Vec<Exp>),
    Call(String, Vec<Exp>),
}

impl Exp {
    pub fn new(kind: ExpKind, pos: Pos) -> Self {
        Exp { kind, pos }
    }

    pub fn is_lvalue(&self) -> bool {
        matches!(self.kind, ExpKind::Var(_) | ExpKind::Deref(_) | ExpKind::Field(..))
    }
}

const KEYWORDS: &[&str] = &[
    "let", "mut", "imm", "in", "if", "then", "else", "case", "of", "call", "fun", "ret", "newlft",
    "endlft", "begin", "end", "new", "true", "false", "void", "inj", "mod",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn parse_surface(text: &str) -> Result<SurfaceProgram, ParseError> {
    let mut p = Parser { c: Cursor::new(tokenize(text)?) };
    p.program()
}

struct Parser {
    c: Cursor,
}

impl Parser {
    fn ident(&mut self) -> Result<(String, Pos), ParseError> {
        match self.c.peek() {
            Tok::Ident(s) if !is_keyword(s) && !s.starts_with('#') => {
                let s = s.clone();
                let pos = self.c.bump().pos;
                Ok((s, pos))
            }
            _ => Err(self.c.unexpected(&["identifier".into()])),
        }
    }

    fn program(&mut self) -> Result<SurfaceProgram, ParseError> {
        let mut prog = SurfaceProgram::default();
        while !self.c.is(&Tok::Eof) && !self.c.is_kw("fun") {
            let (name, pos) = self.ident()?;
            self.c.expect(&Tok::Decl)?;
            let ty = self.rtype()?;
            prog.decls.push(TypeDecl { name, ty, pos });
        }
        while !self.c.is(&Tok::Eof) {
            prog.fns.push(self.fn_def()?);
        }
        Ok(prog)
    }

    fn fn_def(&mut self) -> Result<FnDef, ParseError> {
        let pos = self.c.expect_kw("fun")?;
        let (name, _) = self.ident()?;
        self.c.expect(&Tok::LParen)?;
        let mut params = Vec::new();
        if !self.c.is(&Tok::RParen) {
            loop {
                params.push(self.ident()?.0);
                if !self.c.eat(&Tok::Comma) {
                    break;
                }
            }
        }
        self.c.expect(&Tok::RParen)?;
        let ret = if self.c.eat_kw("ret") { Some(self.ident()?.0) } else { None };
        self.c.expect_kw("newlft")?;
        let body = self.exp()?;
        self.c.expect_kw("endlft")?;
        Ok(FnDef { name, params, ret, body, pos })
    }

    // ---- types ----

    fn lifetime(&mut self) -> Result<Lifetime, ParseError> {
        match self.c.peek().clone() {
            Tok::Lifetime(s) => {
                self.c.bump();
                Ok(Lifetime::Var(s))
            }
            Tok::Ident(s) if s == "lft" => {
                self.c.bump();
                self.c.expect(&Tok::LParen)?;
                let pos = self.c.pos();
                let n = self.c.expect_int()?;
                let n = u32::try_from(n).map_err(|_| ParseError::new(pos, "lifetime depth out of range"))?;
                self.c.expect(&Tok::RParen)?;
                Ok(Lifetime::Depth(n))
            }
            _ => Err(self.c.unexpected(&["lifetime".into()])),
        }
    }

    fn at_lifetime(&self) -> bool {
        matches!(self.c.peek(), Tok::Lifetime(_)) || self.c.is_kw("lft")
    }

    fn lifetimes_until(&mut self, end: &Tok) -> Result<Vec<Lifetime>, ParseError> {
        let mut out = Vec::new();
        if self.c.is(end) {
            return Ok(out);
        }
        loop {
            out.push(self.lifetime()?);
            if !self.c.eat(&Tok::Comma) {
                return Ok(out);
            }
        }
    }

    fn rtypes_until(&mut self, end: &Tok) -> Result<Vec<RType>, ParseError> {
        let mut out = Vec::new();
        if self.c.is(end) {
            return Ok(out);
        }
        loop {
            out.push(self.rtype()?);
            if !self.c.eat(&Tok::Comma) {
                return Ok(out);
            }
        }
    }

    fn mutability(&mut self) -> Result<Mutability, ParseError> {
        if self.c.eat_kw("mut") {
            Ok(Mutability::Mut)
        } else if self.c.eat_kw("imm") {
            Ok(Mutability::Imm)
        } else {
            Err(self.c.unexpected(&["`mut`".into(), "`imm`".into()]))
        }
    }

    fn rtype(&mut self) -> Result<RType, ParseError> {
        let kw = match self.c.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.c.unexpected(&["type".into()])),
        };
        let simple = match kw.as_str() {
            "i32" => Some(RType::I32),
            "bool" => Some(RType::Bool),
            "void" => Some(RType::Void),
            _ => None,
        };
        if let Some(t) = simple {
            self.c.bump();
            return Ok(t);
        }
        match kw.as_str() {
            "ref" | "own" | "array" | "ty" | "prodTy" | "prod" | "sumTy" | "sum" | "fnTy" => {}
            _ => return Err(self.c.unexpected(&["type".into()])),
        }
        self.c.bump();
        self.c.expect(&Tok::LParen)?;
        let ty = match kw.as_str() {
            "ref" => {
                let l = self.lifetime()?;
                self.c.expect(&Tok::Comma)?;
                let m = self.mutability()?;
                self.c.expect(&Tok::Comma)?;
                RType::reference(l, m, self.rtype()?)
            }
            "own" => RType::own(self.rtype()?),
            "array" => RType::Array(Box::new(self.rtype()?)),
            "ty" => RType::Named(self.ident()?.0),
            "prodTy" | "prod" | "sumTy" | "sum" => {
                let lfts = if self.at_lifetime() || self.c.is(&Tok::Semi) {
                    let l = self.lifetimes_until(&Tok::Semi)?;
                    self.c.expect(&Tok::Semi)?;
                    l
                } else {
                    Vec::new()
                };
                let fields = self.rtypes_until(&Tok::RParen)?;
                if fields.is_empty() {
                    return Err(self.c.unexpected(&["type".into()]));
                }
                if kw.starts_with("prod") {
                    RType::Prod(lfts, fields)
                } else {
                    RType::Sum(lfts, fields)
                }
            }
            _ => {
                let lifetimes = self.lifetimes_until(&Tok::Semi)?;
                self.c.expect(&Tok::Semi)?;
                let params = self.rtypes_until(&Tok::Semi)?;
                self.c.expect(&Tok::Semi)?;
                let ret = Box::new(self.rtype()?);
                RType::Fn(FnTy { lifetimes, params, ret })
            }
        };
        self.c.expect(&Tok::RParen)?;
        Ok(ty)
    }

    // ---- expressions ----

    fn at_exp_end(&self) -> bool {
        matches!(self.c.peek(), Tok::RBrace | Tok::RParen | Tok::Comma | Tok::Eof)
            || self.c.is_kw("end")
            || self.c.is_kw("endlft")
    }

    /// `stmt (; stmt)*`, right-nested; a trailing `;` before a closer is allowed.
    fn exp(&mut self) -> Result<Exp, ParseError> {
        let first = self.stmt()?;
        if self.c.is(&Tok::Semi) {
            let pos = self.c.bump().pos;
            if self.at_exp_end() {
                return Ok(first);
            }
            let rest = self.exp()?;
            return Ok(Exp::new(ExpKind::Seq(Box::new(first), Box::new(rest)), pos));
        }
        Ok(first)
    }

    fn braced(&mut self) -> Result<Exp, ParseError> {
        self.c.expect(&Tok::LBrace)?;
        let e = self.exp()?;
        self.c.expect(&Tok::RBrace)?;
        Ok(e)
    }

    fn branch(&mut self) -> Result<Exp, ParseError> {
        if self.c.is(&Tok::LBrace) {
            self.braced()
        } else {
            self.stmt()
        }
    }

    fn stmt(&mut self) -> Result<Exp, ParseError> {
        let pos = self.c.pos();
        if self.c.eat_kw("let") {
            let mutability = if self.c.eat_kw("mut") {
                Mutability::Mut
            } else {
                self.c.eat_kw("imm");
                Mutability::Imm
            };
            let (name, _) = self.ident()?;
            let init = if self.c.eat(&Tok::Eq) { Some(Box::new(self.rvalue()?)) } else { None };
            let body = if self.c.eat_kw("in") {
                Some(Box::new(if self.c.is(&Tok::LBrace) { self.braced()? } else { self.exp()? }))
            } else {
                None
            };
            return Ok(Exp::new(ExpKind::Let { mutability, name, init, body }, pos));
        }
        if self.c.eat_kw("if") {
            let cond = self.rvalue()?;
            self.c.expect_kw("then")?;
            let then = self.branch()?;
            self.c.expect_kw("else")?;
            let els = self.branch()?;
            return Ok(Exp::new(ExpKind::If(Box::new(cond), Box::new(then), Box::new(els)), pos));
        }
        if self.c.eat_kw("case") {
            let scrut = self.rvalue()?;
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
            return Ok(Exp::new(ExpKind::Case(Box::new(scrut), arms), pos));
        }
        if self.c.eat_kw("begin") {
            let e = self.exp()?;
            self.c.expect_kw("end")?;
            return Ok(Exp::new(ExpKind::Block(Box::new(e)), pos));
        }
        if self.c.is(&Tok::LBrace) {
            let e = self.braced()?;
            return Ok(Exp::new(ExpKind::Block(Box::new(e)), pos));
        }
        let lhs = self.rvalue()?;
        if self.c.is(&Tok::Assign) {
            let apos = self.c.bump().pos;
            if !lhs.is_lvalue() {
                return Err(ParseError::new(lhs.pos, "left side of `:=` must be an lvalue"));
            }
            if self.c.eat_kw("inj") {
                let tpos = self.c.pos();
                let tag = self.c.expect_int()?;
                let tag = u32::try_from(tag)
                    .ok()
                    .filter(|t| *t >= 1)
                    .ok_or_else(|| ParseError::new(tpos, "inj tags start at 1"))?;
                let rhs = self.rvalue()?;
                return Ok(Exp::new(ExpKind::Inj(Box::new(lhs), tag, Box::new(rhs)), apos));
            }
            let rhs = self.rvalue()?;
            return Ok(Exp::new(ExpKind::Assign(Box::new(lhs), Box::new(rhs)), apos));
        }
        Ok(lhs)
    }

    fn rvalue(&mut self) -> Result<Exp, ParseError> {
        let lhs = self.add()?;
        let op = match self.c.peek() {
            Tok::Eq => BinOp::Eq,
            Tok::Gt => BinOp::Gt,
            Tok::Lt => BinOp::Lt,
            _ => return Ok(lhs),
        };
        let pos = self.c.bump().pos;
        let rhs = self.add()?;
        Ok(Exp::new(ExpKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos))
    }

    fn add(&mut self) -> Result<Exp, ParseError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.c.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let pos = self.c.bump().pos;
            let rhs = self.mul()?;
            lhs = Exp::new(ExpKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
    }

    fn mul(&mut self) -> Result<Exp, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.c.is(&Tok::Star) {
                BinOp::Mul
            } else if self.c.is_kw("mod") {
                BinOp::Mod
            } else {
                return Ok(lhs);
            };
            let pos = self.c.bump().pos;
            let rhs = self.unary()?;
            lhs = Exp::new(ExpKind::Binary(op, Box::new(lhs), Box::new(rhs)), pos);
        }
    }

    fn unary(&mut self) -> Result<Exp, ParseError> {
        let pos = self.c.pos();
        if self.c.eat(&Tok::Star) {
            let e = self.unary()?;
            return Ok(Exp::new(ExpKind::Deref(Box::new(e)), pos));
        }
        if self.c.eat(&Tok::Amp) {
            let m = self.mutability()?;
            let e = self.unary()?;
            return Ok(Exp::new(ExpKind::Borrow(m, Box::new(e)), pos));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Exp, ParseError> {
        let mut e = self.primary()?;
        while self.c.is(&Tok::Dot) {
            let pos = self.c.bump().pos;
            let idx = if self.c.eat(&Tok::LParen) {
                let i = self.rvalue()?;
                self.c.expect(&Tok::RParen)?;
                FieldIndex::Dyn(Box::new(i))
            } else {
                let ipos = self.c.pos();
                let n = self.c.expect_int()?;
                FieldIndex::Const(
                    u32::try_from(n).map_err(|_| ParseError::new(ipos, "field index out of range"))?,
                )
            };
            e = Exp::new(ExpKind::Field(Box::new(e), idx), pos);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Exp, ParseError> {
        let pos = self.c.pos();
        let kind = match self.c.peek().clone() {
            Tok::Int(n) => {
                self.c.bump();
                ExpKind::Int(n)
            }
            Tok::LParen => {
                self.c.bump();
                let e = self.exp()?;
                self.c.expect(&Tok::RParen)?;
                return Ok(e);
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "false" => {
                    self.c.bump();
                    ExpKind::Bool(s == "true")
                }
                "void" => {
                    self.c.bump();
                    ExpKind::Void
                }
                "new" => {
                    self.c.bump();
                    self.c.expect(&Tok::LParen)?;
                    let ty = self.rtype()?;
                    let count =
                        if self.c.eat(&Tok::Comma) { Some(Box::new(self.rvalue()?)) } else { None };
                    self.c.expect(&Tok::RParen)?;
                    ExpKind::New(ty, count)
                }
                "call" => {
                    self.c.bump();
                    let (name, _) = self.ident()?;
                    self.c.expect(&Tok::LParen)?;
                    let mut args = Vec::new();
                    if !self.c.is(&Tok::RParen) {
                        loop {
                            args.push(self.rvalue()?);
                            if !self.c.eat(&Tok::Comma) {
                                break;
                            }
                        }
                    }
                    self.c.expect(&Tok::RParen)?;
                    ExpKind::Call(name, args)
                }
                _ => ExpKind::Var(self.ident()?.0),
            },
            _ => {
                return Err(self.c.unexpected(&[
                    "integer".into(),
                    "identifier".into(),
                    "`(`".into(),
                    "`new`".into(),
                    "`call`".into(),
                ]))
            }
        };
        Ok(Exp::new(kind, pos))
    }
}

// ---- pretty printing ----

/// Precedence levels, loosest first.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Seq,
    Stmt,
    Cmp,
    Add,
    Mul,
    Unary,
    Postfix,
}

fn prec_of(e: &Exp) -> Prec {
    match &e.kind {
        ExpKind::Seq(..) => Prec::Seq,
        ExpKind::Let { .. }
        | ExpKind::If(..)
        | ExpKind::Case(..)
        | ExpKind::Block(_)
        | ExpKind::Assign(..)
        | ExpKind::Inj(..) => Prec::Stmt,
        ExpKind::Binary(op, ..) if op.is_comparison() => Prec::Cmp,
        ExpKind::Binary(BinOp::Add | BinOp::Sub, ..) => Prec::Add,
        ExpKind::Binary(..) => Prec::Mul,
        ExpKind::Deref(_) | ExpKind::Borrow(..) => Prec::Unary,
        _ => Prec::Postfix,
    }
}

struct Printer {
    out: String,
    indent: usize,
}

impl Printer {
    fn newline(&mut self) {
        self.out.push('\n');
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
    }

    fn exp_at(&mut self, e: &Exp, min: Prec) {
        if prec_of(e) < min {
            self.out.push('(');
            self.exp(e);
            self.out.push(')');
        } else {
            self.exp(e);
        }
    }

    fn block_body(&mut self, e: &Exp) {
        self.out.push('{');
        self.indent += 1;
        self.newline();
        self.exp(e);
        self.indent -= 1;
        self.newline();
        self.out.push('}');
    }

    fn exp(&mut self, e: &Exp) {
        match &e.kind {
            ExpKind::Int(n) => {
                let _ = write!(self.out, "{n}");
            }
            ExpKind::Bool(b) => self.out.push_str(if *b { "true" } else { "false" }),
            ExpKind::Void => self.out.push_str("void"),
            ExpKind::Var(x) => self.out.push_str(x),
            ExpKind::Deref(inner) => {
                self.out.push('*');
                self.exp_at(inner, Prec::Unary);
            }
            ExpKind::Borrow(m, inner) => {
                let _ = write!(self.out, "& {m} ");
                self.exp_at(inner, Prec::Unary);
            }
            ExpKind::Field(base, idx) => {
                self.exp_at(base, Prec::Postfix);
                match idx {
                    FieldIndex::Const(n) => {
                        let _ = write!(self.out, ".{n}");
                    }
                    FieldIndex::Dyn(i) => {
                        self.out.push_str(".(");
                        self.exp_at(i, Prec::Cmp);
                        self.out.push(')');
                    }
                }
            }
            ExpKind::Binary(op, l, r) => {
                let (lp, rp) = match prec_of(e) {
                    Prec::Cmp => (Prec::Add, Prec::Add),
                    Prec::Add => (Prec::Add, Prec::Mul),
                    _ => (Prec::Mul, Prec::Unary),
                };
                self.exp_at(l, lp);
                let _ = write!(self.out, " {} ", op.symbol());
                self.exp_at(r, rp);
            }
            ExpKind::New(ty, count) => {
                let _ = write!(self.out, "new({ty}");
                if let Some(c) = count {
                    self.out.push_str(", ");
                    self.exp_at(c, Prec::Cmp);
                }
                self.out.push(')');
            }
            ExpKind::Assign(l, r) => {
                self.exp_at(l, Prec::Unary);
                self.out.push_str(" := ");
                self.exp_at(r, Prec::Cmp);
            }
            ExpKind::Inj(l, tag, r) => {
                self.exp_at(l, Prec::Unary);
                let _ = write!(self.out, " :=inj {tag} ");
                self.exp_at(r, Prec::Cmp);
            }
            ExpKind::Let { mutability, name, init, body } => {
                self.out.push_str("let ");
                if *mutability == Mutability::Mut {
                    self.out.push_str("mut ");
                }
                self.out.push_str(name);
                if let Some(i) = init {
                    self.out.push_str(" = ");
                    self.exp_at(i, Prec::Cmp);
                }
                if let Some(b) = body {
                    self.out.push_str(" in ");
                    self.block_body(b);
                }
            }
            ExpKind::Block(inner) => {
                self.out.push_str("begin");
                self.indent += 1;
                self.newline();
                self.exp(inner);
                self.indent -= 1;
                self.newline();
                self.out.push_str("end");
            }
            ExpKind::Seq(a, b) => {
                self.exp_at(a, Prec::Stmt);
                self.out.push(';');
                self.newline();
                self.exp_at(b, Prec::Seq);
            }
            ExpKind::If(c, t, f) => {
                self.out.push_str("if ");
                self.exp_at(c, Prec::Cmp);
                self.out.push_str(" then ");
                self.block_body(t);
                self.out.push_str(" else ");
                self.block_body(f);
            }
            ExpKind::Case(s, arms) => {
                self.out.push_str("case ");
                self.exp_at(s, Prec::Cmp);
                self.out.push_str(" of {");
                for (i, a) in arms.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.exp(a);
                }
                self.out.push('}');
            }
            ExpKind::Call(f, args) => {
                let _ = write!(self.out, "call {f}(");
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        self.out.push_str(", ");
                    }
                    self.exp_at(a, Prec::Cmp);
                }
                self.out.push(')');
            }
        }
    }
}

pub fn pretty_surface(p: &SurfaceProgram) -> String {
    let mut pr = Printer { out: String::new(), indent: 0 };
    for d in &p.decls {
        let _ = writeln!(pr.out, "{} :=: {}", d.name, d.ty);
    }
    for f in &p.fns {
        let _ = write!(pr.out, "fun {}({})", f.name, f.params.join(", "));
        if let Some(r) = &f.ret {
            let _ = write!(pr.out, " ret {r}");
        }
        pr.out.push_str(" newlft");
        pr.indent = 1;
        pr.newline();
        pr.exp(&f.body);
        pr.indent = 0;
        pr.out.push_str("\nendlft\n");
    }
    pr.out
}

/// Renders a single expression in surface syntax.
pub fn pretty_exp(e: &Exp) -> String {
    let mut pr = Printer { out: String::new(), indent: 0 };
    pr.exp(e);
    pr.out
}

impl core::fmt::Display for Exp {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&pretty_exp(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_program() {
        let p = parse_surface("").unwrap();
        assert!(p.decls.is_empty() && p.fns.is_empty());
        assert_eq!(pretty_surface(&p), "");
    }

    #[test]
    fn unclosed_params_error() {
        let err = parse_surface("fun f( newlft void endlft").unwrap_err();
        assert_eq!(err.pos, Pos { line: 1, col: 8 });
        assert!(err.expected.iter().any(|e| e.contains("identifier")));
    }

    #[test]
    fn let_forms() {
        let p = parse_surface(
            "main :=: fnTy(;;void)\nfun main() newlft let return in { return := false; return } endlft",
        )
        .unwrap();
        match &p.fns[0].body.kind {
            ExpKind::Let { init: None, body: Some(_), mutability: Mutability::Imm, .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn field_and_deref_precedence() {
        let p = parse_surface("fun f() newlft (*q).4.((*q).2) := 1 endlft").unwrap();
        let ExpKind::Assign(lhs, _) = &p.fns[0].body.kind else { panic!() };
        let ExpKind::Field(base, FieldIndex::Dyn(_)) = &lhs.kind else { panic!() };
        let ExpKind::Field(inner, FieldIndex::Const(4)) = &base.kind else { panic!() };
        assert!(matches!(inner.kind, ExpKind::Deref(_)));
    }

    #[test]
    fn unbraced_let_chain() {
        let src = "fun f() newlft let mut x = new(i32) in let y = & mut x in let z = & imm (* y) endlft";
        let p = parse_surface(src).unwrap();
        let again = parse_surface(&pretty_surface(&p)).unwrap();
        assert_eq!(p, again);
    }
}
