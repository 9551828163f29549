//! Translation of checked surface programs into the core language.
//!
//! Value representation:
//!
//! * `i32` is an integer, `bool` is 0/1, `void` is `clskip`.
//! * `own(T)` is the location of a freshly allocated block. When `T` is a
//!   product, sum or array the location *is* the compound; otherwise it
//!   points at the single unit holding `T`.
//! * `ref(T)` for scalar `T` is the location of the unit holding the value.
//!   For any other `T` a reference has the same representation as `T`
//!   itself, so `& mut q` of an owner is just `q` and `*r` is free.
//!
//! Variables live in the machine environment. A variable is moved into a
//! one-unit heap cell ("boxed") when its address is taken while it holds a
//! scalar, or when it is rebound inside the body of a nested `let`: a
//! nested `let` lowers to a non-tail application, whose return restores the
//! caller environment and would otherwise drop the update.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::syntax::{
    ArithOp, BinOp, CoreExp, CoreKind, CoreProgram, Exp, ExpKind, FieldIndex, Offset, Order, Pos,
    SurfaceProgram,
};
use crate::types::{CompoundRegistry, EqMode, Lifetime, RType};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LowerError {
    #[error("{pos}: cannot lower: {what}")]
    Unsupported { pos: Pos, what: String },
    #[error("{pos}: unknown name `{name}`")]
    UnknownName { pos: Pos, name: String },
    #[error("{pos}: cannot determine the type of this expression")]
    Untyped { pos: Pos },
    #[error("invalid type declarations: {0}")]
    Declarations(String),
}

type Res<T> = Result<T, LowerError>;

fn unsupported(pos: Pos, what: impl Into<String>) -> LowerError {
    LowerError::Unsupported { pos, what: what.into() }
}

#[derive(Clone, Debug)]
enum Place {
    /// A variable kept in the environment.
    Env(String),
    /// A heap unit at the given location.
    Cell(CoreExp),
    /// A compound (or temporary) whose representation is the given value.
    Alias(CoreExp),
}

#[derive(Clone, Debug)]
struct Slot {
    name: String,
    ty: Option<RType>,
    boxed: bool,
}

struct Lowerer<'a> {
    reg: &'a CompoundRegistry,
    scopes: Vec<Slot>,
    marks: Vec<usize>,
    narrow: Vec<(Exp, RType)>,
    fresh: u32,
}

fn c(kind: CoreKind, pos: Pos) -> CoreExp {
    CoreExp::new(kind, pos)
}

fn ident(x: &str) -> CoreExp {
    CoreExp::gen(CoreKind::Ident(x.into()))
}

fn int(n: i64) -> CoreExp {
    CoreExp::gen(CoreKind::Int(n))
}

fn deref_na(e: CoreExp) -> CoreExp {
    let pos = e.pos;
    c(CoreKind::Deref(Order::Na, Box::new(e)), pos)
}

fn field(e: CoreExp, off: u64) -> CoreExp {
    let pos = e.pos;
    c(CoreKind::Field(Box::new(e), Offset::Const(off)), pos)
}

fn anon(params: Vec<String>, body: CoreExp) -> CoreExp {
    CoreExp::gen(CoreKind::AnonFn { params, body: Box::new(body) })
}

fn mem_assign(l: CoreExp, r: CoreExp, pos: Pos) -> CoreExp {
    c(CoreKind::MemAssign(Box::new(l), Order::Na, Box::new(r)), pos)
}

impl<'a> Lowerer<'a> {
    fn new(reg: &'a CompoundRegistry) -> Self {
        Lowerer { reg, scopes: Vec::new(), marks: Vec::new(), narrow: Vec::new(), fresh: 0 }
    }

    fn fresh(&mut self, base: &str) -> String {
        let n = self.fresh;
        self.fresh += 1;
        format!("#{base}{n}")
    }

    fn push_scope(&mut self) {
        self.marks.push(self.scopes.len());
    }

    fn pop_scope(&mut self) {
        let m = self.marks.pop().expect("scope underflow");
        self.scopes.truncate(m);
    }

    fn bind(&mut self, name: &str, ty: Option<RType>, boxed: bool) {
        self.scopes.push(Slot { name: name.into(), ty, boxed });
    }

    fn slot(&mut self, x: &str, pos: Pos) -> Res<&mut Slot> {
        self.scopes
            .iter_mut()
            .rev()
            .find(|s| s.name == x)
            .ok_or_else(|| LowerError::UnknownName { pos, name: x.into() })
    }

    fn resolve(&self, t: &RType, pos: Pos) -> Res<RType> {
        self.reg.resolve(t).map_err(|e| unsupported(pos, e.to_string()))
    }

    fn is_compound(&self, t: &RType, pos: Pos) -> Res<bool> {
        Ok(matches!(self.resolve(t, pos)?, RType::Prod(..) | RType::Sum(..) | RType::Array(_)))
    }

    fn eq(&self, a: &RType, b: &RType) -> bool {
        self.reg.type_equal(a, b, EqMode::ModuloLifetimes)
    }

    fn size(&self, t: &RType, pos: Pos) -> Res<u64> {
        self.reg.size_of(t).map_err(|e| unsupported(pos, e.to_string()))
    }

    // ---- places ----

    fn value(p: Place) -> CoreExp {
        match p {
            Place::Env(x) => ident(&x),
            Place::Cell(l) => deref_na(l),
            Place::Alias(v) => v,
        }
    }

    fn place_or_temp(&mut self, e: &Exp) -> Res<(Place, RType)> {
        if e.is_lvalue() {
            self.place(e)
        } else {
            let (v, t) = self.exp(e)?;
            Ok((Place::Alias(v), t))
        }
    }

    fn deref(&self, p: Place, t: &RType, pos: Pos) -> Res<(Place, RType)> {
        match self.resolve(t, pos)? {
            RType::Own(u) => {
                let v = Self::value(p);
                if self.is_compound(&u, pos)? {
                    Ok((Place::Alias(v), *u))
                } else {
                    Ok((Place::Cell(v), *u))
                }
            }
            RType::Ref(_, _, u) => {
                let v = Self::value(p);
                if u.is_scalar() {
                    Ok((Place::Cell(v), *u))
                } else {
                    Ok((Place::Alias(v), *u))
                }
            }
            other => Err(unsupported(pos, format!("dereference of `{other}`"))),
        }
    }

    fn auto_deref(&self, mut p: Place, mut t: RType, pos: Pos) -> Res<(Place, RType)> {
        while matches!(self.resolve(&t, pos)?, RType::Own(_) | RType::Ref(..)) {
            (p, t) = self.deref(p, &t, pos)?;
        }
        Ok((p, t))
    }

    fn place(&mut self, e: &Exp) -> Res<(Place, RType)> {
        match &e.kind {
            ExpKind::Var(x) => {
                let s = self.slot(x, e.pos)?.clone();
                let ty = s.ty.ok_or(LowerError::Untyped { pos: e.pos })?;
                let p = if s.boxed { Place::Cell(c(CoreKind::Ident(x.clone()), e.pos)) } else { Place::Env(x.clone()) };
                Ok((p, ty))
            }
            ExpKind::Deref(inner) => {
                let (p, t) = self.place_or_temp(inner)?;
                self.deref(p, &t, e.pos)
            }
            ExpKind::Field(base, idx) => {
                let (p, t) = self.place_or_temp(base)?;
                let (p, t) = self.auto_deref(p, t, e.pos)?;
                let Place::Alias(v) = p else {
                    return Err(unsupported(e.pos, "field of a compound held by value"));
                };
                let (cell, ft) = match (self.resolve(&t, e.pos)?, idx) {
                    (RType::Prod(_, fs), FieldIndex::Const(i)) if *i >= 1 && (*i as usize) <= fs.len() => {
                        (field(v, u64::from(*i) - 1), fs[*i as usize - 1].clone())
                    }
                    (RType::Sum(..), FieldIndex::Const(1)) => {
                        let ft = self
                            .narrow
                            .iter()
                            .rev()
                            .find(|(s, _)| s == base.as_ref())
                            .map(|(_, t)| t.clone())
                            .ok_or(LowerError::Untyped { pos: e.pos })?;
                        (field(v, 1), ft)
                    }
                    (RType::Array(et), FieldIndex::Dyn(i)) => {
                        let (ie, _) = self.exp(i)?;
                        (c(CoreKind::Field(Box::new(v), Offset::Dyn(Box::new(ie))), e.pos), *et)
                    }
                    (other, _) => return Err(unsupported(e.pos, format!("field access on `{other}`"))),
                };
                if self.is_compound(&ft, e.pos)? {
                    return Err(unsupported(e.pos, "compound field stored by value"));
                }
                Ok((Place::Cell(cell), ft))
            }
            _ => self.place_or_temp(e),
        }
    }

    fn write(&mut self, p: Place, t: &RType, r: CoreExp, pos: Pos) -> Res<CoreExp> {
        match p {
            Place::Env(x) => Ok(c(CoreKind::EnvAssign(x, Box::new(r)), pos)),
            Place::Cell(l) => Ok(mem_assign(l, r, pos)),
            Place::Alias(v) => {
                let n = match self.resolve(t, pos)? {
                    RType::Prod(..) | RType::Sum(..) => self.size(t, pos)?,
                    _ => return Err(unsupported(pos, "whole write through an alias")),
                };
                let tmp = self.fresh("copy");
                let mut body: Option<CoreExp> = None;
                for i in (0..n).rev() {
                    let w = mem_assign(field(v.clone(), i), deref_na(field(ident(&tmp), i)), pos);
                    body = Some(match body {
                        None => w,
                        Some(rest) => CoreExp::seq(w, rest),
                    });
                }
                Ok(CoreExp::apply(anon(vec![tmp], body.unwrap_or(CoreExp::gen(CoreKind::Skip))), vec![r]))
            }
        }
    }

    // ---- expressions ----

    fn exp(&mut self, e: &Exp) -> Res<(CoreExp, RType)> {
        let pos = e.pos;
        match &e.kind {
            ExpKind::Int(n) => Ok((c(CoreKind::Int(*n), pos), RType::I32)),
            ExpKind::Bool(b) => Ok((c(CoreKind::Int(i64::from(*b)), pos), RType::Bool)),
            ExpKind::Void => Ok((c(CoreKind::Skip, pos), RType::Void)),
            ExpKind::Var(_) | ExpKind::Deref(_) | ExpKind::Field(..) => {
                let (p, t) = self.place(e)?;
                Ok((Self::value(p), t))
            }
            ExpKind::Binary(op, a, b) => {
                let (x, _) = self.exp(a)?;
                let (y, _) = self.exp(b)?;
                let (aop, t) = match op {
                    BinOp::Add => (ArithOp::Add, RType::I32),
                    BinOp::Sub => (ArithOp::Sub, RType::I32),
                    BinOp::Mul => (ArithOp::Mul, RType::I32),
                    BinOp::Mod => (ArithOp::Mod, RType::I32),
                    BinOp::Eq => (ArithOp::Eq, RType::Bool),
                    BinOp::Lt => (ArithOp::Lt, RType::Bool),
                    BinOp::Gt => (ArithOp::Gt, RType::Bool),
                };
                Ok((c(CoreKind::Arith(aop, Box::new(x), Box::new(y)), pos), t))
            }
            ExpKind::Borrow(m, target) => {
                let (p, t) = self.place(target)?;
                let v = if t.is_scalar() {
                    match p {
                        Place::Cell(l) => l,
                        _ => return Err(unsupported(pos, "address of a scalar that is not in memory")),
                    }
                } else {
                    Self::value(p)
                };
                Ok((v, RType::reference(Lifetime::Depth(0), *m, t)))
            }
            ExpKind::New(t, count) => {
                let size = self.size(t, pos)?;
                match count {
                    None => Ok((c(CoreKind::Allocate(Box::new(c(CoreKind::Int(size as i64), pos))), pos), RType::own(t.clone()))),
                    Some(n) => {
                        let (ne, _) = self.exp(n)?;
                        let amount = match (&ne.kind, size) {
                            (CoreKind::Int(k), _) => int(k * size as i64),
                            (_, 1) => ne,
                            _ => c(CoreKind::Arith(ArithOp::Mul, Box::new(ne), Box::new(int(size as i64))), pos),
                        };
                        Ok((
                            c(CoreKind::Allocate(Box::new(amount)), pos),
                            RType::own(RType::Array(Box::new(t.clone()))),
                        ))
                    }
                }
            }
            ExpKind::Assign(lhs, rhs) => {
                let (r, rt) = self.exp(rhs)?;
                if let ExpKind::Var(x) = &lhs.kind {
                    let s = self.slot(x, lhs.pos)?;
                    if s.ty.is_none() {
                        s.ty = Some(rt.clone());
                    }
                }
                let (p, t) = self.place(lhs)?;
                let w = if !self.eq(&t, &rt) && matches!(self.resolve(&t, pos)?, RType::Own(_)) {
                    let (p, t) = self.deref(p, &t, pos)?;
                    self.write(p, &t, r, pos)?
                } else {
                    self.write(p, &t, r, pos)?
                };
                Ok((w, RType::Void))
            }
            ExpKind::Inj(lhs, tag, rhs) => {
                let (p, t) = self.place(lhs)?;
                let (p, _) = self.auto_deref(p, t, pos)?;
                let Place::Alias(v) = p else {
                    return Err(unsupported(pos, "inj into a sum held by value"));
                };
                let (r, _) = self.exp(rhs)?;
                let tag_w = mem_assign(field(v.clone(), 0), c(CoreKind::Int(i64::from(*tag)), pos), pos);
                let val_w = mem_assign(field(v, 1), r, pos);
                Ok((c(CoreKind::Seq(Box::new(tag_w), Box::new(val_w)), pos), RType::Void))
            }
            ExpKind::Let { .. } => self.let_exp(e, None),
            ExpKind::Block(inner) => {
                self.push_scope();
                let r = self.exp(inner);
                self.pop_scope();
                r
            }
            ExpKind::Seq(a, b) => {
                if let ExpKind::Let { body: None, .. } = a.kind {
                    return self.let_exp(a, Some(b));
                }
                let (x, _) = self.exp(a)?;
                let (y, t) = self.exp(b)?;
                let p = self.fresh("anonymous");
                let call = CoreExp::apply(anon(vec![p], y), vec![x]);
                Ok((c(CoreKind::TailCall(Box::new(call)), pos), t))
            }
            ExpKind::If(cond, t, f) => {
                let (ce, _) = self.exp(cond)?;
                let (te, tt) = self.exp(t)?;
                let (fe, _) = self.exp(f)?;
                Ok((c(CoreKind::Case(Box::new(ce), vec![fe, te]), pos), tt))
            }
            ExpKind::Case(s, arms) => {
                let (p, t) = self.place_or_temp(s)?;
                let (p, t) = self.auto_deref(p, t, pos)?;
                match self.resolve(&t, pos)? {
                    RType::Sum(_, vs) => {
                        let Place::Alias(v) = p else {
                            return Err(unsupported(pos, "case on a sum held by value"));
                        };
                        let tag = deref_na(field(v, 0));
                        let scrut = c(CoreKind::Arith(ArithOp::Sub, Box::new(tag), Box::new(int(1))), pos);
                        let mut out = Vec::new();
                        let mut ty = RType::Void;
                        for (arm, vt) in arms.iter().zip(vs) {
                            self.narrow.push(((**s).clone(), vt));
                            let r = self.exp(arm);
                            self.narrow.pop();
                            let (ae, at) = r?;
                            if out.is_empty() {
                                ty = at;
                            }
                            out.push(ae);
                        }
                        Ok((c(CoreKind::Case(Box::new(scrut), out), pos), ty))
                    }
                    _ => {
                        let scrut = Self::value(p);
                        let mut out = Vec::new();
                        let mut ty = RType::Void;
                        for arm in arms {
                            let (ae, at) = self.exp(arm)?;
                            if out.is_empty() {
                                ty = at;
                            }
                            out.push(ae);
                        }
                        Ok((c(CoreKind::Case(Box::new(scrut), out), pos), ty))
                    }
                }
            }
            ExpKind::Call(f, args) => {
                let sig = self
                    .reg
                    .signatures
                    .get(f)
                    .cloned()
                    .ok_or_else(|| LowerError::UnknownName { pos, name: f.clone() })?;
                let mut out = Vec::new();
                for a in args {
                    out.push(self.exp(a)?.0);
                }
                let call = c(CoreKind::Apply(Box::new(c(CoreKind::Ident(f.clone()), pos)), out), pos);
                Ok((call, *sig.ret))
            }
        }
    }

    /// `(fn (x){B})(I)`; boxed variables get a fresh cell holding `I`.
    fn let_exp(&mut self, e: &Exp, rest: Option<&Exp>) -> Res<(CoreExp, RType)> {
        let ExpKind::Let { name, init, body, .. } = &e.kind else { unreachable!() };
        let body = body.as_deref().or(rest);
        let (ie, ity) = match init {
            Some(i) => {
                let (ie, t) = self.exp(i)?;
                (Some(ie), Some(t))
            }
            None => (None, None),
        };
        let boxed = body.is_some_and(|b| {
            let scalar_or_unknown = ity.as_ref().is_none_or(|t| t.is_scalar());
            (scalar_or_unknown && address_taken(name, b)) || rebound_in_nested_let(name, b, false)
        });
        self.push_scope();
        self.bind(name, ity, boxed);
        let r = match body {
            Some(b) => self.exp(b),
            None => Ok((c(CoreKind::Skip, e.pos), RType::Void)),
        };
        self.pop_scope();
        let (be, bt) = r?;
        Ok((self.bind_exp(name, ie, be, boxed, e.pos), bt))
    }

    fn bind_exp(&mut self, name: &str, init: Option<CoreExp>, body: CoreExp, boxed: bool, pos: Pos) -> CoreExp {
        let alloc1 = || c(CoreKind::Allocate(Box::new(int(1))), pos);
        if !boxed {
            let arg = init.unwrap_or_else(|| c(CoreKind::Int(0), pos));
            return c(CoreKind::Apply(Box::new(anon(vec![name.into()], body)), vec![arg]), pos);
        }
        match init {
            None => c(CoreKind::Apply(Box::new(anon(vec![name.into()], body)), vec![alloc1()]), pos),
            Some(i) => {
                let tmp = self.fresh("init");
                let store = mem_assign(ident(name), ident(&tmp), pos);
                let inner = c(
                    CoreKind::Apply(Box::new(anon(vec![name.into()], CoreExp::seq(store, body))), vec![alloc1()]),
                    pos,
                );
                c(CoreKind::Apply(Box::new(anon(vec![tmp], inner)), vec![i]), pos)
            }
        }
    }
}

/// Does `e` borrow the variable `x` directly (`& m x`)?
fn address_taken(x: &str, e: &Exp) -> bool {
    let mut found = false;
    walk(x, e, false, &mut |ex, _| {
        if let ExpKind::Borrow(_, t) = &ex.kind {
            if matches!(&t.kind, ExpKind::Var(y) if y == x) {
                found = true;
            }
        }
    });
    found
}

/// Is `x` assigned as a whole somewhere inside the body of a nested `let`?
fn rebound_in_nested_let(x: &str, e: &Exp, nested: bool) -> bool {
    let mut found = false;
    walk(x, e, nested, &mut |ex, nested| {
        if nested {
            if let ExpKind::Assign(l, _) = &ex.kind {
                if matches!(&l.kind, ExpKind::Var(y) if y == x) {
                    found = true;
                }
            }
        }
    });
    found
}

/// Visits every node where `x` still refers to the outer binding. The flag
/// says whether the node sits inside the body of a nested `let`.
fn walk(x: &str, e: &Exp, nested: bool, f: &mut dyn FnMut(&Exp, bool)) {
    f(e, nested);
    match &e.kind {
        ExpKind::Int(_) | ExpKind::Bool(_) | ExpKind::Void | ExpKind::Var(_) => {}
        ExpKind::Deref(a) | ExpKind::Borrow(_, a) | ExpKind::Block(a) => walk(x, a, nested, f),
        ExpKind::Field(a, idx) => {
            walk(x, a, nested, f);
            if let FieldIndex::Dyn(i) = idx {
                walk(x, i, nested, f);
            }
        }
        ExpKind::New(_, n) => {
            if let Some(n) = n {
                walk(x, n, nested, f);
            }
        }
        ExpKind::Binary(_, a, b) | ExpKind::Assign(a, b) | ExpKind::Inj(a, _, b) => {
            walk(x, a, nested, f);
            walk(x, b, nested, f);
        }
        ExpKind::Let { name, init, body, .. } => {
            if let Some(i) = init {
                walk(x, i, nested, f);
            }
            if let (Some(b), false) = (body, name == x) {
                walk(x, b, true, f);
            }
        }
        ExpKind::Seq(a, b) => {
            walk(x, a, nested, f);
            match &a.kind {
                ExpKind::Let { body: None, name, .. } if name == x => {}
                ExpKind::Let { body: None, .. } => walk(x, b, true, f),
                _ => walk(x, b, nested, f),
            }
        }
        ExpKind::If(a, b, c) => {
            walk(x, a, nested, f);
            walk(x, b, nested, f);
            walk(x, c, nested, f);
        }
        ExpKind::Case(s, arms) => {
            walk(x, s, nested, f);
            arms.iter().for_each(|a| walk(x, a, nested, f));
        }
        ExpKind::Call(_, args) => args.iter().for_each(|a| walk(x, a, nested, f)),
    }
}

/// Lowers a program that passed the checker. The result lists every
/// function definition followed by a call to `main` when one is defined.
pub fn lower_program(p: &SurfaceProgram) -> Result<CoreProgram, LowerError> {
    let mut reg = CompoundRegistry::new();
    for d in &p.decls {
        reg.declare_type(&d.name, d.ty.clone())
            .map_err(|e| LowerError::Declarations(e.to_string()))?;
    }
    let mut lw = Lowerer::new(&reg);
    let mut items = Vec::new();
    for f in &p.fns {
        let sig = reg
            .signatures
            .get(&f.name)
            .cloned()
            .ok_or_else(|| LowerError::UnknownName { pos: f.pos, name: f.name.clone() })?;
        lw.scopes.clear();
        lw.marks.clear();
        lw.push_scope();
        let mut boxed_params = Vec::new();
        for (p, t) in f.params.iter().zip(&sig.params) {
            let boxed = (t.is_scalar() && address_taken(p, &f.body)) || rebound_in_nested_let(p, &f.body, false);
            if boxed {
                boxed_params.push(p.clone());
            }
            lw.bind(p, Some(t.clone()), boxed);
        }
        let (mut body, _) = lw.exp(&f.body)?;
        lw.pop_scope();
        for p in boxed_params.iter().rev() {
            body = lw.bind_exp(p, Some(ident(p)), body, true, f.pos);
        }
        items.push(c(
            CoreKind::FnDef { name: f.name.clone(), params: f.params.clone(), body: Box::new(body) },
            f.pos,
        ));
    }
    if p.fns.iter().any(|f| f.name == "main") {
        items.push(CoreExp::apply(ident("main"), Vec::new()));
    }
    Ok(CoreProgram { items })
}
