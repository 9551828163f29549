//! Ownership, borrowing, and lifetime checking for surface programs.
//!
//! Every variable gets a unique, increasing index when bound. Lifetimes are
//! lexical nesting depths: each function body, `let` body and block enters
//! a new one. Per variable the checker tracks its depth, mutability, type,
//! the depth of the longest-lived live immutable borrow (`L1`) and mutable
//! borrow (`L2`), and whether it is initialized. Borrow records are only
//! released when the lifetime they were taken for ends.
//!
//! A mutable reference that is immutably reborrowed is *frozen*: while the
//! reborrow is live, writes through, moves of, and mutable reborrows from
//! that reference are rejected.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::syntax::{BinOp, Exp, ExpKind, FieldIndex, FnDef, Pos, SurfaceProgram};
use crate::types::{is_copy, CompoundRegistry, EqMode, FnTy, Lifetime, Mutability, RType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeErrorKind {
    UseOfMoved,
    UseOfUninit,
    AssignToImmutable,
    ConflictingMutBorrow,
    MutBorrowWhileBorrowed,
    BorrowOutlivesOwner,
    FrozenWrite,
    TypeMismatch,
    ArityMismatch,
    UnknownName,
    InvalidInjTag,
    NonExhaustiveCase,
}

impl fmt::Display for TypeErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub pos: Pos,
    pub message: String,
}

impl TypeError {
    fn new(kind: TypeErrorKind, pos: Pos, message: impl Into<String>) -> Self {
        TypeError { kind, pos, message: message.into() }
    }
}

/// `error[KIND] line:col: message`
impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}] {}: {}", self.kind, self.pos, self.message)
    }
}

impl core::error::Error for TypeError {}

type Res<T> = Result<T, TypeError>;

use TypeErrorKind::*;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    /// Lifetime depth the variable was bound at.
    pub lft: u32,
    pub mutability: Mutability,
    /// `None` until the first assignment of an uninitialized binding.
    pub ty: Option<RType>,
    /// Immutable-borrow depth, 0 when none.
    pub l1: u32,
    /// Mutable-borrow depth, 0 when none.
    pub l2: u32,
    pub init: bool,
}

/// One accepted borrow: `holder` now refers into `owner`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BorrowEvent {
    pub owner: u32,
    pub holder: u32,
    pub mutability: Mutability,
    pub reborrow: bool,
}

#[derive(Clone, Debug, Default)]
pub struct CheckerState {
    pub var_cnt: u32,
    pub var_info: BTreeMap<u32, VarInfo>,
    pub env: BTreeMap<String, u32>,
    pub stack_env: Vec<BTreeMap<String, u32>>,
    pub current_lft: u32,
    pub registry: CompoundRegistry,
    /// Frozen mutable references: index to the depth of the freezing reborrow.
    pub freeze: BTreeMap<u32, u32>,
    /// Reference variable to the owner it was borrowed from.
    pub lender: BTreeMap<u32, u32>,
    /// Variables uninitialized by a move rather than never initialized.
    pub moved: BTreeSet<u32>,
    pub borrow_log: Vec<BorrowEvent>,
    /// Every index handed out by `fresh_var`, in order.
    pub bindings: Vec<u32>,
}

/// A resolved lvalue.
#[derive(Clone, Debug)]
struct Place {
    root: Option<u32>,
    ty: RType,
    /// The path dereferences at least one reference.
    via_ref: bool,
    ref_muts: Vec<Mutability>,
    /// Lifetime of the first reference dereferenced.
    ref_lft: Option<Lifetime>,
    /// The lvalue is a bare variable.
    direct: bool,
}

#[derive(Clone)]
struct Snapshot {
    var_info: BTreeMap<u32, VarInfo>,
    env: BTreeMap<String, u32>,
    freeze: BTreeMap<u32, u32>,
    lender: BTreeMap<u32, u32>,
    moved: BTreeSet<u32>,
}

pub struct Checker {
    pub st: CheckerState,
    defined: BTreeSet<String>,
    /// Case scrutinees with the variant type selected by the current branch.
    narrow: Vec<(Exp, RType)>,
}

/// Per-variable `(index, l1, l2)` plus the freeze map.
type BorrowMarks = (Vec<(u32, u32, u32)>, BTreeMap<u32, u32>);

#[derive(Clone, Debug)]
pub struct CheckedProgram {
    pub registry: CompoundRegistry,
    pub var_cnt: u32,
    pub borrow_log: Vec<BorrowEvent>,
    pub bindings: Vec<u32>,
}

fn mark(old: u32, new: u32) -> u32 {
    if old == 0 {
        new
    } else {
        old.min(new)
    }
}

fn max_depth(t: &RType) -> Option<u32> {
    let mut ls = Vec::new();
    t.ref_lifetimes(&mut ls);
    ls.iter()
        .filter_map(|l| match l {
            Lifetime::Depth(d) => Some(*d),
            Lifetime::Var(_) => None,
        })
        .max()
}

fn unify(p: &RType, a: &RType, bind: &mut BTreeMap<String, u32>) {
    match (p, a) {
        (RType::Ref(lp, _, tp), RType::Ref(la, _, ta)) => {
            if let Lifetime::Var(v) = lp {
                let d = match la {
                    Lifetime::Depth(d) => *d,
                    Lifetime::Var(_) => 0,
                };
                let e = bind.entry(v.clone()).or_insert(d);
                *e = (*e).min(d);
            }
            unify(tp, ta, bind);
        }
        (RType::Own(x), RType::Own(y)) | (RType::Array(x), RType::Array(y)) => unify(x, y, bind),
        (RType::Prod(_, xs), RType::Prod(_, ys)) | (RType::Sum(_, xs), RType::Sum(_, ys)) => {
            xs.iter().zip(ys).for_each(|(x, y)| unify(x, y, bind));
        }
        _ => {}
    }
}

fn mentions_var(t: &RType, vars: &BTreeMap<String, u32>) -> bool {
    let mut ls = Vec::new();
    t.ref_lifetimes(&mut ls);
    if let RType::Prod(l, _) | RType::Sum(l, _) = t {
        ls.extend(l.iter().cloned());
    }
    ls.iter().any(|l| matches!(l, Lifetime::Var(v) if vars.contains_key(v)))
}

impl Default for Checker {
    fn default() -> Self {
        Self::new(CompoundRegistry::new())
    }
}

impl Checker {
    pub fn new(registry: CompoundRegistry) -> Self {
        Checker {
            st: CheckerState { registry, ..CheckerState::default() },
            defined: BTreeSet::new(),
            narrow: Vec::new(),
        }
    }

    /// Marks `name` as having a definition, so calls to it are accepted.
    pub fn define(&mut self, name: &str) {
        self.defined.insert(name.into());
    }

    // ---- variables and lifetimes ----

    pub fn fresh_var(&mut self, name: &str, m: Mutability, ty: Option<RType>, init: bool) -> u32 {
        let idx = self.st.var_cnt;
        self.st.var_cnt += 1;
        self.st.env.insert(name.into(), idx);
        self.st.var_info.insert(
            idx,
            VarInfo {
                name: name.into(),
                lft: self.st.current_lft,
                mutability: m,
                ty,
                l1: 0,
                l2: 0,
                init,
            },
        );
        self.st.bindings.push(idx);
        idx
    }

    pub fn enter_lifetime(&mut self) {
        self.st.stack_env.push(self.st.env.clone());
        self.st.current_lft += 1;
    }

    pub fn exit_lifetime(&mut self) {
        let env = self.st.stack_env.pop().expect("lifetime underflow");
        self.st.env = env;
        self.st.current_lft -= 1;
        let cur = self.st.current_lft;
        for info in self.st.var_info.values_mut() {
            if info.l1 > cur {
                info.l1 = 0;
            }
            if info.l2 > cur {
                info.l2 = 0;
            }
        }
        self.st.freeze.retain(|_, d| *d <= cur);
    }

    fn live(&self, v: u32) -> bool {
        v != 0 && v <= self.st.current_lft
    }

    fn info(&self, idx: u32) -> &VarInfo {
        &self.st.var_info[&idx]
    }

    fn info_mut(&mut self, idx: u32) -> &mut VarInfo {
        self.st.var_info.get_mut(&idx).expect("bound variable")
    }

    fn frozen(&self, idx: u32) -> bool {
        self.st.freeze.get(&idx).is_some_and(|d| self.live(*d))
    }

    fn lookup(&self, x: &str, pos: Pos) -> Res<u32> {
        self.st
            .env
            .get(x)
            .copied()
            .ok_or_else(|| TypeError::new(UnknownName, pos, format!("unknown variable `{x}`")))
    }

    fn require_init(&self, idx: u32, pos: Pos) -> Res<()> {
        let info = self.info(idx);
        if info.init {
            return Ok(());
        }
        if self.st.moved.contains(&idx) {
            Err(TypeError::new(UseOfMoved, pos, format!("use of moved value `{}`", info.name)))
        } else {
            Err(TypeError::new(
                UseOfUninit,
                pos,
                format!("`{}` is used before it is initialized", info.name),
            ))
        }
    }

    fn resolve(&self, t: &RType, pos: Pos) -> Res<RType> {
        self.st
            .registry
            .resolve(t)
            .map_err(|e| TypeError::new(UnknownName, pos, e.to_string()))
    }

    fn eq(&self, a: &RType, b: &RType) -> bool {
        self.st.registry.type_equal(a, b, EqMode::ModuloLifetimes)
    }

    fn mismatch(pos: Pos, expected: &RType, found: &RType) -> TypeError {
        TypeError::new(TypeMismatch, pos, format!("expected `{expected}`, found `{found}`"))
    }

    fn check_type_exists(&self, t: &RType, pos: Pos) -> Res<()> {
        match t {
            RType::Named(n) if self.st.registry.lookup(n).is_none() => {
                Err(TypeError::new(UnknownName, pos, format!("unknown type `{n}`")))
            }
            RType::Ref(_, _, t) | RType::Own(t) | RType::Array(t) => self.check_type_exists(t, pos),
            RType::Prod(_, ts) | RType::Sum(_, ts) => {
                ts.iter().try_for_each(|t| self.check_type_exists(t, pos))
            }
            RType::Fn(ft) => {
                ft.params.iter().try_for_each(|t| self.check_type_exists(t, pos))?;
                self.check_type_exists(&ft.ret, pos)
            }
            _ => Ok(()),
        }
    }

    fn synthetic_dest(&mut self) -> (u32, u32) {
        let idx = self.st.var_cnt;
        self.st.var_cnt += 1;
        (idx, self.st.current_lft)
    }

    // ---- places ----

    fn deref_place(&self, p: &mut Place, pos: Pos) -> Res<()> {
        match self.resolve(&p.ty, pos)? {
            RType::Own(t) => p.ty = *t,
            RType::Ref(l, m, t) => {
                p.via_ref = true;
                p.ref_muts.push(m);
                p.ref_lft.get_or_insert(l);
                p.ty = *t;
            }
            other => {
                return Err(TypeError::new(
                    TypeMismatch,
                    pos,
                    format!("type `{other}` cannot be dereferenced"),
                ))
            }
        }
        p.direct = false;
        Ok(())
    }

    /// Resolves the base of a deref or field access; the root must be
    /// initialized since its value is used.
    fn place_base(&mut self, e: &Exp) -> Res<Place> {
        if e.is_lvalue() {
            let p = self.place(e)?;
            if let (Some(r), true) = (p.root, p.direct) {
                self.require_init(r, e.pos)?;
            }
            Ok(p)
        } else {
            let ty = self.type_of(e)?;
            Ok(Place { root: None, ty, via_ref: false, ref_muts: Vec::new(), ref_lft: None, direct: false })
        }
    }

    fn place(&mut self, e: &Exp) -> Res<Place> {
        match &e.kind {
            ExpKind::Var(x) => {
                let idx = self.lookup(x, e.pos)?;
                let ty = match &self.info(idx).ty {
                    Some(t) => t.clone(),
                    None => {
                        return Err(TypeError::new(
                            UseOfUninit,
                            e.pos,
                            format!("`{x}` is used before it is initialized"),
                        ))
                    }
                };
                Ok(Place {
                    root: Some(idx),
                    ty,
                    via_ref: false,
                    ref_muts: Vec::new(),
                    ref_lft: None,
                    direct: true,
                })
            }
            ExpKind::Deref(inner) => {
                let mut p = self.place_base(inner)?;
                self.deref_place(&mut p, e.pos)?;
                Ok(p)
            }
            ExpKind::Field(base, idx) => {
                let mut p = self.place_base(base)?;
                p.direct = false;
                while matches!(self.resolve(&p.ty, e.pos)?, RType::Own(_) | RType::Ref(..)) {
                    self.deref_place(&mut p, e.pos)?;
                }
                p.ty = self.select_field(base, &p.ty, idx, e.pos)?;
                Ok(p)
            }
            _ => {
                let ty = self.type_of(e)?;
                Ok(Place { root: None, ty, via_ref: false, ref_muts: Vec::new(), ref_lft: None, direct: false })
            }
        }
    }

    fn select_field(&mut self, base: &Exp, ty: &RType, idx: &FieldIndex, pos: Pos) -> Res<RType> {
        match (self.resolve(ty, pos)?, idx) {
            (RType::Prod(_, fs), FieldIndex::Const(i)) => {
                let i = *i as usize;
                if i >= 1 && i <= fs.len() {
                    Ok(fs[i - 1].clone())
                } else {
                    Err(TypeError::new(
                        TypeMismatch,
                        pos,
                        format!("`{ty}` has no field {i}; fields are numbered 1 to {}", fs.len()),
                    ))
                }
            }
            (RType::Sum(..), FieldIndex::Const(1)) => self
                .narrow
                .iter()
                .rev()
                .find(|(s, _)| s == base)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| {
                    TypeError::new(
                        TypeMismatch,
                        pos,
                        "sum payload can only be read inside a case on the same value",
                    )
                }),
            (RType::Array(t), FieldIndex::Dyn(i)) => {
                let it = self.type_of(i)?;
                if it != RType::I32 {
                    return Err(Self::mismatch(i.pos, &RType::I32, &it));
                }
                Ok(*t)
            }
            (other, _) => Err(TypeError::new(
                TypeMismatch,
                pos,
                format!("invalid field access on `{other}`"),
            )),
        }
    }

    fn check_movable(&self, r: u32, pos: Pos) -> Res<()> {
        let info = self.info(r);
        if self.frozen(r) {
            return Err(TypeError::new(
                FrozenWrite,
                pos,
                format!("cannot move `{}` while it is frozen by a shared reborrow", info.name),
            ));
        }
        if self.live(info.l1) || self.live(info.l2) {
            return Err(TypeError::new(
                MutBorrowWhileBorrowed,
                pos,
                format!("cannot move out of `{}` because it is borrowed", info.name),
            ));
        }
        Ok(())
    }

    /// Value use of an lvalue: requires initialization, moves non-copy values.
    fn read(&mut self, e: &Exp) -> Res<RType> {
        let p = self.place(e)?;
        let Some(r) = p.root else { return Ok(p.ty) };
        if p.direct {
            self.require_init(r, e.pos)?;
        }
        if !p.via_ref && self.live(self.info(r).l2) {
            return Err(TypeError::new(
                ConflictingMutBorrow,
                e.pos,
                format!("cannot use `{}` while it is mutably borrowed", self.info(r).name),
            ));
        }
        if !is_copy(&p.ty) {
            if p.via_ref {
                return Err(TypeError::new(
                    TypeMismatch,
                    e.pos,
                    "cannot move out of borrowed content",
                ));
            }
            self.check_movable(r, e.pos)?;
            self.info_mut(r).init = false;
            self.st.moved.insert(r);
        }
        Ok(p.ty)
    }

    // ---- borrows ----

    /// Borrows `target` for a reference held by `dest` (index, depth).
    /// Returns the reference type and the owner the reference points into.
    fn borrow(
        &mut self,
        m: Mutability,
        target: &Exp,
        dest: (u32, u32),
        pos: Pos,
    ) -> Res<(RType, Option<u32>)> {
        let (dest_idx, dest_lft) = dest;
        let p = self.place(target)?;
        let Some(r) = p.root else {
            return Ok((RType::reference(Lifetime::Depth(dest_lft), m, p.ty), None));
        };
        if p.direct {
            self.require_init(r, target.pos)?;
        }
        let name = self.info(r).name.clone();
        let root_ty = self.info(r).ty.clone().unwrap_or(RType::Void);
        let root_is_ref = p.via_ref && matches!(self.resolve(&root_ty, pos)?, RType::Ref(..));
        let order = |owner: u32| {
            if owner < dest_idx {
                Ok(())
            } else {
                Err(TypeError::new(
                    BorrowOutlivesOwner,
                    pos,
                    format!("`{name}` does not live long enough: it is created after the reference"),
                ))
            }
        };

        if root_is_ref {
            let info = self.info(r).clone();
            match m {
                Mutability::Mut => {
                    if p.ref_muts.contains(&Mutability::Imm) {
                        return Err(TypeError::new(
                            AssignToImmutable,
                            pos,
                            "cannot borrow as mutable through a shared reference",
                        ));
                    }
                    if self.frozen(r) {
                        return Err(TypeError::new(
                            FrozenWrite,
                            pos,
                            format!("`{name}` is frozen by a live shared reborrow"),
                        ));
                    }
                    if self.live(info.l2) {
                        return Err(TypeError::new(
                            ConflictingMutBorrow,
                            pos,
                            format!("`*{name}` is already mutably borrowed"),
                        ));
                    }
                    if self.live(info.l1) {
                        return Err(TypeError::new(
                            MutBorrowWhileBorrowed,
                            pos,
                            format!("`*{name}` is already borrowed"),
                        ));
                    }
                    order(r)?;
                    let i = self.info_mut(r);
                    i.l2 = mark(i.l2, dest_lft);
                }
                Mutability::Imm => {
                    if self.live(info.l2) {
                        return Err(TypeError::new(
                            ConflictingMutBorrow,
                            pos,
                            format!("`*{name}` is already mutably borrowed"),
                        ));
                    }
                    order(r)?;
                    if p.ref_muts.first() == Some(&Mutability::Mut) {
                        let f = self.st.freeze.get(&r).copied().unwrap_or(0);
                        self.st.freeze.insert(r, mark(f, dest_lft));
                    }
                    let i = self.info_mut(r);
                    i.l1 = mark(i.l1, dest_lft);
                }
            }
            let owner = self.st.lender.get(&r).copied();
            if let Some(o) = owner {
                if let Some(oi) = self.st.var_info.get_mut(&o) {
                    match m {
                        Mutability::Imm => oi.l1 = mark(oi.l1, dest_lft),
                        Mutability::Mut => oi.l2 = mark(oi.l2, dest_lft),
                    }
                }
            }
            self.st.borrow_log.push(BorrowEvent {
                owner: r,
                holder: dest_idx,
                mutability: m,
                reborrow: true,
            });
            let lft = match &p.ref_lft {
                Some(l @ Lifetime::Var(_)) => l.clone(),
                _ => Lifetime::Depth(dest_lft),
            };
            return Ok((RType::reference(lft, m, p.ty), Some(owner.unwrap_or(r))));
        }

        let info = self.info(r).clone();
        if self.live(info.l2) {
            return Err(TypeError::new(
                ConflictingMutBorrow,
                pos,
                format!("`{name}` is already mutably borrowed"),
            ));
        }
        if m == Mutability::Mut {
            if self.live(info.l1) {
                return Err(TypeError::new(
                    MutBorrowWhileBorrowed,
                    pos,
                    format!("cannot borrow `{name}` as mutable because it is also borrowed as immutable"),
                ));
            }
            if info.mutability != Mutability::Mut {
                return Err(TypeError::new(
                    AssignToImmutable,
                    pos,
                    format!("cannot borrow immutable `{name}` as mutable"),
                ));
            }
        }
        order(r)?;
        let i = self.info_mut(r);
        match m {
            Mutability::Imm => i.l1 = mark(i.l1, dest_lft),
            Mutability::Mut => i.l2 = mark(i.l2, dest_lft),
        }
        self.st.borrow_log.push(BorrowEvent { owner: r, holder: dest_idx, mutability: m, reborrow: false });
        Ok((RType::reference(Lifetime::Depth(dest_lft), m, p.ty), Some(r)))
    }

    // ---- expressions ----

    pub fn type_of(&mut self, e: &Exp) -> Res<RType> {
        match &e.kind {
            ExpKind::Int(_) => Ok(RType::I32),
            ExpKind::Bool(_) => Ok(RType::Bool),
            ExpKind::Void => Ok(RType::Void),
            ExpKind::Var(_) | ExpKind::Deref(_) | ExpKind::Field(..) => self.read(e),
            ExpKind::Binary(op, a, b) => {
                let ta = self.type_of(a)?;
                let tb = self.type_of(b)?;
                match op {
                    BinOp::Eq => {
                        if !ta.is_scalar() {
                            return Err(Self::mismatch(a.pos, &RType::I32, &ta));
                        }
                        if ta != tb {
                            return Err(Self::mismatch(b.pos, &ta, &tb));
                        }
                        Ok(RType::Bool)
                    }
                    _ => {
                        for (t, x) in [(&ta, a), (&tb, b)] {
                            if *t != RType::I32 {
                                return Err(Self::mismatch(x.pos, &RType::I32, t));
                            }
                        }
                        Ok(if op.is_comparison() { RType::Bool } else { RType::I32 })
                    }
                }
            }
            ExpKind::Borrow(m, target) => {
                let dest = self.synthetic_dest();
                Ok(self.borrow(*m, target, dest, e.pos)?.0)
            }
            ExpKind::New(t, count) => {
                self.check_type_exists(t, e.pos)?;
                if let Err(err) = self.st.registry.size_of(t) {
                    return Err(TypeError::new(TypeMismatch, e.pos, err.to_string()));
                }
                match count {
                    None => Ok(RType::own(t.clone())),
                    Some(n) => {
                        let tn = self.type_of(n)?;
                        if tn != RType::I32 {
                            return Err(Self::mismatch(n.pos, &RType::I32, &tn));
                        }
                        Ok(RType::own(RType::Array(Box::new(t.clone()))))
                    }
                }
            }
            ExpKind::Assign(lhs, rhs) => {
                self.check_assign(lhs, rhs, e.pos)?;
                Ok(RType::Void)
            }
            ExpKind::Inj(lhs, tag, rhs) => {
                self.check_inj(lhs, *tag, rhs, e.pos)?;
                Ok(RType::Void)
            }
            ExpKind::Let { .. } => self.check_let(e, None),
            ExpKind::Block(inner) => {
                self.enter_lifetime();
                let t = self.type_of(inner);
                self.exit_lifetime();
                let t = t?;
                self.check_escape(&t, e.pos)?;
                Ok(t)
            }
            ExpKind::Seq(a, b) => {
                if let ExpKind::Let { body: None, .. } = a.kind {
                    return self.check_let(a, Some(b));
                }
                self.type_of(a)?;
                self.type_of(b)
            }
            ExpKind::If(c, t, f) => {
                let tc = self.type_of(c)?;
                if tc != RType::Bool {
                    return Err(Self::mismatch(c.pos, &RType::Bool, &tc));
                }
                self.branches(&[(t.as_ref(), None), (f.as_ref(), None)], None, e.pos)
            }
            ExpKind::Case(s, arms) => self.check_case(s, arms, e.pos),
            ExpKind::Call(f, args) => self.check_call(f, args, e.pos),
        }
    }

    fn check_escape(&self, t: &RType, pos: Pos) -> Res<()> {
        match max_depth(t) {
            Some(d) if d > self.st.current_lft => Err(TypeError::new(
                BorrowOutlivesOwner,
                pos,
                format!("value of type `{t}` outlives the scope it borrows from"),
            )),
            _ => Ok(()),
        }
    }

    /// `let m x [= init] [in body]`; a let without `in` scopes over `rest`.
    fn check_let(&mut self, e: &Exp, rest: Option<&Exp>) -> Res<RType> {
        let ExpKind::Let { mutability, name, init, body } = &e.kind else { unreachable!() };
        let body = body.as_deref().or(rest);
        let (ty, owner) = match init.as_deref() {
            None => (None, None),
            Some(Exp { kind: ExpKind::Borrow(m, target), pos }) => {
                let dest = (self.st.var_cnt, self.st.current_lft + 1);
                let (t, o) = self.borrow(*m, target, dest, *pos)?;
                (Some(t), o)
            }
            Some(i) => (Some(self.type_of(i)?), None),
        };
        self.enter_lifetime();
        let init_known = ty.is_some();
        let x = self.fresh_var(name, *mutability, ty, init_known);
        if let Some(o) = owner {
            self.st.lender.insert(x, o);
        }
        let t = match body {
            Some(b) => self.type_of(b),
            None => Ok(RType::Void),
        };
        self.exit_lifetime();
        let t = t?;
        self.check_escape(&t, e.pos)?;
        Ok(t)
    }

    fn check_assign(&mut self, lhs: &Exp, rhs: &Exp, pos: Pos) -> Res<()> {
        // right side first; a borrow is held by the assigned variable
        let direct_var = match &lhs.kind {
            ExpKind::Var(x) => Some(self.lookup(x, lhs.pos)?),
            _ => None,
        };
        let (rt, owner) = match (&rhs.kind, direct_var) {
            (ExpKind::Borrow(m, target), Some(v)) => {
                let dest = (v, self.info(v).lft);
                self.borrow(*m, target, dest, rhs.pos)?
            }
            _ => (self.type_of(rhs)?, None),
        };

        if let Some(v) = direct_var {
            let info = self.info(v).clone();
            if self.frozen(v) {
                return Err(TypeError::new(
                    FrozenWrite,
                    pos,
                    format!("cannot assign to `{}` while it is frozen", info.name),
                ));
            }
            if self.live(info.l1) || self.live(info.l2) {
                return Err(TypeError::new(
                    MutBorrowWhileBorrowed,
                    pos,
                    format!("cannot assign to `{}` because it is borrowed", info.name),
                ));
            }
            match &info.ty {
                None => {}
                Some(t) if self.eq(t, &rt) => {}
                Some(t) => {
                    // writing the pointee of an owner
                    let inner = match self.resolve(t, pos)? {
                        RType::Own(u) if info.init => Some(*u),
                        _ => None,
                    };
                    match inner {
                        Some(u) if self.eq(&u, &rt) => {
                            if info.mutability != Mutability::Mut {
                                return Err(TypeError::new(
                                    AssignToImmutable,
                                    pos,
                                    format!("cannot assign through immutable `{}`", info.name),
                                ));
                            }
                            return Ok(());
                        }
                        _ => return Err(Self::mismatch(rhs.pos, t, &rt)),
                    }
                }
            }
            if info.init && info.mutability != Mutability::Mut {
                return Err(TypeError::new(
                    AssignToImmutable,
                    pos,
                    format!("cannot assign twice to immutable variable `{}`", info.name),
                ));
            }
            let i = self.info_mut(v);
            if i.ty.is_none() {
                i.ty = Some(rt);
            }
            i.init = true;
            self.st.moved.remove(&v);
            match owner {
                Some(o) => {
                    self.st.lender.insert(v, o);
                }
                None => {
                    self.st.lender.remove(&v);
                }
            }
            return Ok(());
        }

        let p = self.place(lhs)?;
        self.check_write(&p, pos, true)?;
        if self.eq(&p.ty, &rt) {
            return Ok(());
        }
        match self.resolve(&p.ty, pos)? {
            RType::Own(u) if self.eq(&u, &rt) => Ok(()),
            _ => Err(Self::mismatch(rhs.pos, &p.ty, &rt)),
        }
    }

    /// Permission to write into a non-variable place.
    fn check_write(&self, p: &Place, pos: Pos, need_mut_binding: bool) -> Res<()> {
        let Some(r) = p.root else { return Ok(()) };
        let info = self.info(r);
        if p.via_ref {
            if self.frozen(r) {
                return Err(TypeError::new(
                    FrozenWrite,
                    pos,
                    format!("cannot write through `{}` while it is frozen", info.name),
                ));
            }
            if p.ref_muts.contains(&Mutability::Imm) {
                return Err(TypeError::new(
                    AssignToImmutable,
                    pos,
                    "cannot assign through a shared reference",
                ));
            }
        } else if need_mut_binding && info.mutability != Mutability::Mut {
            return Err(TypeError::new(
                AssignToImmutable,
                pos,
                format!("cannot assign into immutable `{}`", info.name),
            ));
        }
        if self.live(info.l1) || self.live(info.l2) {
            return Err(TypeError::new(
                MutBorrowWhileBorrowed,
                pos,
                format!("cannot assign into `{}` because it is borrowed", info.name),
            ));
        }
        Ok(())
    }

    fn check_inj(&mut self, lhs: &Exp, tag: u32, rhs: &Exp, pos: Pos) -> Res<()> {
        let rt = self.type_of(rhs)?;
        let mut p = self.place(lhs)?;
        if let (Some(r), true) = (p.root, p.direct) {
            self.require_init(r, lhs.pos)?;
        }
        while matches!(self.resolve(&p.ty, pos)?, RType::Own(_) | RType::Ref(..)) {
            self.deref_place(&mut p, pos)?;
        }
        let RType::Sum(_, vs) = self.resolve(&p.ty, pos)? else {
            return Err(TypeError::new(
                TypeMismatch,
                pos,
                format!("`inj` needs a sum type, found `{}`", p.ty),
            ));
        };
        if tag == 0 || tag as usize > vs.len() {
            return Err(TypeError::new(
                InvalidInjTag,
                pos,
                format!("tag {tag} is out of range for a sum with {} variants", vs.len()),
            ));
        }
        let vt = &vs[tag as usize - 1];
        if !self.eq(vt, &rt) {
            return Err(Self::mismatch(rhs.pos, vt, &rt));
        }
        self.check_write(&p, pos, false)
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            var_info: self.st.var_info.clone(),
            env: self.st.env.clone(),
            freeze: self.st.freeze.clone(),
            lender: self.st.lender.clone(),
            moved: self.st.moved.clone(),
        }
    }

    fn restore(&mut self, s: Snapshot) {
        self.st.var_info = s.var_info;
        self.st.env = s.env;
        self.st.freeze = s.freeze;
        self.st.lender = s.lender;
        self.st.moved = s.moved;
    }

    /// Checks each branch from the same starting state and merges the
    /// results conservatively.
    fn branches(
        &mut self,
        arms: &[(&Exp, Option<RType>)],
        scrutinee: Option<&Exp>,
        pos: Pos,
    ) -> Res<RType> {
        let start = self.snapshot();
        let mut ends: Vec<Snapshot> = Vec::new();
        let mut result: Option<RType> = None;
        for (arm, narrow) in arms {
            self.restore(start.clone());
            let pushed = match (scrutinee, narrow) {
                (Some(s), Some(t)) => {
                    self.narrow.push((s.clone(), t.clone()));
                    true
                }
                _ => false,
            };
            let t = self.type_of(arm);
            if pushed {
                self.narrow.pop();
            }
            let t = t?;
            match &result {
                None => result = Some(t),
                Some(r) if self.eq(r, &t) => {}
                Some(r) => {
                    return Err(TypeError::new(
                        TypeMismatch,
                        arm.pos,
                        format!("branches have different types: `{r}` and `{t}`"),
                    ))
                }
            }
            ends.push(self.snapshot());
        }
        let mut merged = ends.remove(0);
        for other in ends {
            for (idx, info) in other.var_info {
                match merged.var_info.get_mut(&idx) {
                    None => {
                        merged.var_info.insert(idx, info);
                    }
                    Some(m) => {
                        m.init &= info.init;
                        m.l1 = merge_lft(m.l1, info.l1);
                        m.l2 = merge_lft(m.l2, info.l2);
                        if m.ty.is_none() {
                            m.ty = info.ty;
                        }
                    }
                }
            }
            for (idx, d) in other.freeze {
                let e = merged.freeze.entry(idx).or_insert(d);
                *e = merge_lft(*e, d);
            }
            for (r, o) in other.lender {
                merged.lender.entry(r).or_insert(o);
            }
            merged.moved.extend(other.moved);
        }
        self.restore(merged);
        result.ok_or_else(|| TypeError::new(NonExhaustiveCase, pos, "case without branches"))
    }

    fn check_case(&mut self, s: &Exp, arms: &[Exp], pos: Pos) -> Res<RType> {
        let st = if s.is_lvalue() {
            let p = self.place(s)?;
            if let (Some(r), true) = (p.root, p.direct) {
                self.require_init(r, s.pos)?;
                if self.live(self.info(r).l2) {
                    return Err(TypeError::new(
                        ConflictingMutBorrow,
                        s.pos,
                        format!("cannot use `{}` while it is mutably borrowed", self.info(r).name),
                    ));
                }
            }
            let mut t = p.ty;
            while let RType::Own(u) | RType::Ref(_, _, u) = self.resolve(&t, s.pos)? {
                t = *u;
            }
            t
        } else {
            self.type_of(s)?
        };
        let variants: Vec<Option<RType>> = match self.resolve(&st, s.pos)? {
            RType::Bool => alloc::vec![None, None],
            RType::Sum(_, vs) => vs.into_iter().map(Some).collect(),
            other => {
                return Err(TypeError::new(
                    TypeMismatch,
                    s.pos,
                    format!("case needs a bool or sum scrutinee, found `{other}`"),
                ))
            }
        };
        if variants.len() != arms.len() {
            return Err(TypeError::new(
                NonExhaustiveCase,
                pos,
                format!("expected {} branches, found {}", variants.len(), arms.len()),
            ));
        }
        let pairs: Vec<(&Exp, Option<RType>)> = arms.iter().zip(variants).collect();
        self.branches(&pairs, Some(s), pos)
    }

    fn borrow_marks(&self) -> BorrowMarks {
        let marks = self.st.var_info.iter().map(|(i, v)| (*i, v.l1, v.l2)).collect();
        (marks, self.st.freeze.clone())
    }

    fn check_call(&mut self, f: &str, args: &[Exp], pos: Pos) -> Res<RType> {
        let sig: FnTy = self.st.registry.signatures.get(f).cloned().ok_or_else(|| {
            TypeError::new(UnknownName, pos, format!("unknown function `{f}`"))
        })?;
        if !self.defined.contains(f) {
            return Err(TypeError::new(UnknownName, pos, format!("function `{f}` has no definition")));
        }
        if sig.params.len() != args.len() {
            return Err(TypeError::new(
                ArityMismatch,
                pos,
                format!("`{f}` takes {} arguments but {} were supplied", sig.params.len(), args.len()),
            ));
        }
        let (marks, freeze) = self.borrow_marks();
        let mut bind = BTreeMap::new();
        for (arg, pt) in args.iter().zip(&sig.params) {
            let param_ref = match pt {
                RType::Ref(_, m, _) => Some(*m),
                _ => None,
            };
            let at = match param_ref {
                Some(m) if arg.is_lvalue() && self.is_ref_lvalue(arg)? => {
                    let at = self.place(arg)?.ty;
                    if !self.eq(&at, pt) {
                        return Err(Self::mismatch(arg.pos, pt, &at));
                    }
                    let deref = Exp::new(ExpKind::Deref(Box::new(arg.clone())), arg.pos);
                    let dest = self.synthetic_dest();
                    self.borrow(m, &deref, dest, arg.pos)?;
                    at
                }
                _ => self.type_of(arg)?,
            };
            if !self.eq(&at, pt) {
                return Err(Self::mismatch(arg.pos, pt, &at));
            }
            unify(pt, &at, &mut bind);
        }
        let ret = sig.ret.map_lifetimes(&|l| match l {
            Lifetime::Var(v) => bind.get(v).map(|d| Lifetime::Depth(*d)),
            _ => None,
        });
        if !mentions_var(&sig.ret, &bind) {
            for (i, l1, l2) in marks {
                if let Some(v) = self.st.var_info.get_mut(&i) {
                    v.l1 = l1;
                    v.l2 = l2;
                }
            }
            self.st.freeze = freeze;
        }
        Ok(ret)
    }

    fn is_ref_lvalue(&mut self, e: &Exp) -> Res<bool> {
        if let ExpKind::Var(x) = &e.kind {
            let v = self.lookup(x, e.pos)?;
            self.require_init(v, e.pos)?;
        }
        let t = self.place(e)?.ty;
        Ok(matches!(self.resolve(&t, e.pos)?, RType::Ref(..)))
    }

    pub fn check_fn(&mut self, f: &FnDef) -> Res<()> {
        let sig = self.st.registry.signatures.get(&f.name).cloned().ok_or_else(|| {
            TypeError::new(UnknownName, f.pos, format!("function `{}` has no fnTy declaration", f.name))
        })?;
        if sig.params.len() != f.params.len() {
            return Err(TypeError::new(
                ArityMismatch,
                f.pos,
                format!(
                    "`{}` is declared with {} parameters but defined with {}",
                    f.name,
                    sig.params.len(),
                    f.params.len()
                ),
            ));
        }
        self.st.env.clear();
        self.narrow.clear();
        self.enter_lifetime();
        for (p, t) in f.params.iter().zip(&sig.params) {
            self.fresh_var(p, Mutability::Mut, Some(t.clone()), true);
        }
        let t = self.type_of(&f.body);
        self.exit_lifetime();
        let t = t?;
        if let Some(d) = max_depth(&t) {
            if d > 0 {
                return Err(TypeError::new(
                    BorrowOutlivesOwner,
                    f.body.pos,
                    format!("`{}` returns a reference to a local (lifetime lft({d}))", f.name),
                ));
            }
        }
        if *sig.ret != RType::Void && !self.eq(&t, &sig.ret) {
            return Err(TypeError::new(
                TypeMismatch,
                f.body.pos,
                format!("`{}` should return `{}` but its body has type `{t}`", f.name, sig.ret),
            ));
        }
        Ok(())
    }
}

fn merge_lft(a: u32, b: u32) -> u32 {
    match (a, b) {
        (0, x) | (x, 0) => x,
        (x, y) => x.min(y),
    }
}

/// Checks a whole program. Checking stops at the first error inside a
/// function but continues with the next function.
pub fn check_program(p: &SurfaceProgram) -> Result<CheckedProgram, Vec<TypeError>> {
    let mut errors = Vec::new();
    let mut reg = CompoundRegistry::new();
    for d in &p.decls {
        if let Err(e) = reg.declare_type(&d.name, d.ty.clone()) {
            errors.push(TypeError::new(TypeMismatch, d.pos, e.to_string()));
        }
    }
    let mut ck = Checker::new(reg);
    for d in &p.decls {
        if let Err(e) = ck.check_type_exists(&d.ty, d.pos) {
            errors.push(e);
        }
    }
    if let Some(main) = ck.st.registry.signatures.get("main") {
        if !(main.lifetimes.is_empty() && main.params.is_empty() && *main.ret == RType::Void) {
            let pos = p.decls.iter().find(|d| d.name == "main").map(|d| d.pos).unwrap_or_default();
            errors.push(TypeError::new(
                TypeMismatch,
                pos,
                format!("`main` must have type `fnTy(;;void)`, found `{}`", RType::Fn(main.clone())),
            ));
        }
    }
    let mut seen = BTreeSet::new();
    for f in &p.fns {
        if !seen.insert(f.name.clone()) {
            errors.push(TypeError::new(
                TypeMismatch,
                f.pos,
                format!("function `{}` is defined more than once", f.name),
            ));
        }
        ck.define(&f.name);
    }
    for f in &p.fns {
        if let Err(e) = ck.check_fn(f) {
            errors.push(e);
        }
        ck.st.current_lft = 0;
        ck.st.stack_env.clear();
    }
    if errors.is_empty() {
        Ok(CheckedProgram {
            registry: ck.st.registry,
            var_cnt: ck.st.var_cnt,
            borrow_log: ck.st.borrow_log,
            bindings: ck.st.bindings,
        })
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests;
