//! Surface types, the compound-type registry, and the sizing/copy rules
//! that the checker and the lowering share.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mutability {
    Mut,
    Imm,
}

impl fmt::Display for Mutability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mutability::Mut => "mut",
            Mutability::Imm => "imm",
        })
    }
}

/// A lexical lifetime: a concrete nesting depth or a lifetime variable.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lifetime {
    Depth(u32),
    Var(String),
}

impl fmt::Display for Lifetime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lifetime::Depth(d) => write!(f, "lft({d})"),
            Lifetime::Var(v) => write!(f, "'{v}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FnTy {
    pub lifetimes: Vec<Lifetime>,
    pub params: Vec<RType>,
    pub ret: Box<RType>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RType {
    I32,
    Bool,
    Void,
    Ref(Lifetime, Mutability, Box<RType>),
    Own(Box<RType>),
    Prod(Vec<Lifetime>, Vec<RType>),
    Sum(Vec<Lifetime>, Vec<RType>),
    Fn(FnTy),
    Array(Box<RType>),
    /// `ty(Name)`: resolved through the [`CompoundRegistry`].
    Named(String),
}

impl RType {
    pub fn own(inner: RType) -> RType {
        RType::Own(Box::new(inner))
    }

    pub fn reference(lft: Lifetime, m: Mutability, inner: RType) -> RType {
        RType::Ref(lft, m, Box::new(inner))
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, RType::I32 | RType::Bool)
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, RType::Ref(..) | RType::Own(_))
    }

    /// Replaces every lifetime variable for which `f` returns a value.
    pub fn map_lifetimes(&self, f: &dyn Fn(&Lifetime) -> Option<Lifetime>) -> RType {
        let lft = |l: &Lifetime| f(l).unwrap_or_else(|| l.clone());
        let list = |ls: &[Lifetime]| ls.iter().map(lft).collect::<Vec<_>>();
        let tys = |ts: &[RType]| ts.iter().map(|t| t.map_lifetimes(f)).collect::<Vec<_>>();
        match self {
            RType::Ref(l, m, t) => RType::Ref(lft(l), *m, Box::new(t.map_lifetimes(f))),
            RType::Own(t) => RType::Own(Box::new(t.map_lifetimes(f))),
            RType::Array(t) => RType::Array(Box::new(t.map_lifetimes(f))),
            RType::Prod(ls, ts) => RType::Prod(list(ls), tys(ts)),
            RType::Sum(ls, ts) => RType::Sum(list(ls), tys(ts)),
            RType::Fn(ft) => RType::Fn(FnTy {
                lifetimes: list(&ft.lifetimes),
                params: tys(&ft.params),
                ret: Box::new(ft.ret.map_lifetimes(f)),
            }),
            other => other.clone(),
        }
    }

    /// Collects every lifetime mentioned by reference types inside `self`.
    pub fn ref_lifetimes(&self, out: &mut Vec<Lifetime>) {
        match self {
            RType::Ref(l, _, t) => {
                out.push(l.clone());
                t.ref_lifetimes(out);
            }
            RType::Own(t) | RType::Array(t) => t.ref_lifetimes(out),
            RType::Prod(_, ts) | RType::Sum(_, ts) => {
                ts.iter().for_each(|t| t.ref_lifetimes(out));
            }
            _ => {}
        }
    }
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, xs: &[T]) -> fmt::Result {
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl fmt::Display for RType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RType::I32 => f.write_str("i32"),
            RType::Bool => f.write_str("bool"),
            RType::Void => f.write_str("void"),
            RType::Ref(l, m, t) => write!(f, "ref({l},{m},{t})"),
            RType::Own(t) => write!(f, "own({t})"),
            RType::Array(t) => write!(f, "array({t})"),
            RType::Named(n) => write!(f, "ty({n})"),
            RType::Prod(ls, ts) | RType::Sum(ls, ts) => {
                let kw = if matches!(self, RType::Prod(..)) { "prodTy" } else { "sumTy" };
                write!(f, "{kw}(")?;
                if !ls.is_empty() {
                    write_list(f, ls)?;
                    f.write_str(";")?;
                }
                write_list(f, ts)?;
                f.write_str(")")
            }
            RType::Fn(ft) => {
                f.write_str("fnTy(")?;
                write_list(f, &ft.lifetimes)?;
                f.write_str(";")?;
                write_list(f, &ft.params)?;
                write!(f, ";{})", ft.ret)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompoundKind {
    Sum,
    Prod,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompoundEntry {
    pub id: u32,
    pub kind: CompoundKind,
    pub elems: BTreeMap<u32, RType>,
    pub count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TypeDeclError {
    #[error("type `{0}` is declared more than once")]
    DuplicateType(String),
    #[error("`{0}` must have at least one field")]
    Empty(String),
    #[error("`{0}` contains itself by value")]
    SelfContaining(String),
    #[error("`{0}` must name a product, sum, or function type, found `{1}`")]
    NotCompound(String, RType),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SizeError {
    #[error("type `{0}` has no static size")]
    Unsized(RType),
    #[error("unknown type `{0}`")]
    Unknown(String),
}

/// Declared sum/product types plus the function-signature table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompoundRegistry {
    pub next_id: u32,
    pub entries: BTreeMap<String, CompoundEntry>,
    pub signatures: BTreeMap<String, FnTy>,
}

impl CompoundRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare_type(&mut self, name: &str, ty: RType) -> Result<(), TypeDeclError> {
        if self.entries.contains_key(name) || self.signatures.contains_key(name) {
            return Err(TypeDeclError::DuplicateType(name.into()));
        }
        match ty {
            RType::Fn(ft) => {
                self.signatures.insert(name.into(), ft);
            }
            RType::Prod(_, fields) | RType::Sum(_, fields) if fields.is_empty() => {
                return Err(TypeDeclError::Empty(name.into()));
            }
            RType::Prod(_, ref fields) | RType::Sum(_, ref fields) => {
                if fields.iter().any(|t| contains_by_value(t, name)) {
                    return Err(TypeDeclError::SelfContaining(name.into()));
                }
                let kind = if matches!(ty, RType::Prod(..)) {
                    CompoundKind::Prod
                } else {
                    CompoundKind::Sum
                };
                let elems: BTreeMap<u32, RType> =
                    fields.iter().cloned().enumerate().map(|(i, t)| (i as u32, t)).collect();
                let count = elems.len() as u32;
                self.entries.insert(
                    name.into(),
                    CompoundEntry { id: self.next_id, kind, elems, count },
                );
                self.next_id += 1;
            }
            other => return Err(TypeDeclError::NotCompound(name.into(), other)),
        }
        Ok(())
    }

    pub fn lookup(&self, name: &str) -> Option<&CompoundEntry> {
        self.entries.get(name)
    }

    /// Expands a `ty(Name)` one level into its product/sum form.
    pub fn resolve(&self, ty: &RType) -> Result<RType, SizeError> {
        match ty {
            RType::Named(n) => {
                let e = self.lookup(n).ok_or_else(|| SizeError::Unknown(n.clone()))?;
                let fields: Vec<RType> = e.elems.values().cloned().collect();
                Ok(match e.kind {
                    CompoundKind::Prod => RType::Prod(Vec::new(), fields),
                    CompoundKind::Sum => RType::Sum(Vec::new(), fields),
                })
            }
            other => Ok(other.clone()),
        }
    }

    /// Memory footprint in units. Pointers and scalars take one unit, a
    /// product one unit per field, a sum a tag unit plus a payload unit.
    pub fn size_of(&self, ty: &RType) -> Result<u64, SizeError> {
        match self.resolve(ty)? {
            RType::I32 | RType::Bool | RType::Ref(..) | RType::Own(_) => Ok(1),
            RType::Prod(_, fs) => Ok(fs.len() as u64),
            RType::Sum(..) => Ok(2),
            other @ (RType::Array(_) | RType::Fn(_) | RType::Void) => Err(SizeError::Unsized(other)),
            RType::Named(_) => unreachable!("resolve strips one name"),
        }
    }

    /// Size of `count` elements of `elem`, as allocated by `new(T, n)`.
    pub fn size_of_array(&self, elem: &RType, count: u64) -> Result<u64, SizeError> {
        Ok(self.size_of(elem)? * count)
    }

    pub fn type_equal(&self, a: &RType, b: &RType, mode: EqMode) -> bool {
        self.type_equal_in(a, b, mode, &mut Vec::new())
    }

    /// Structural comparison; pairs of names already under comparison are
    /// assumed equal so recursive types terminate.
    fn type_equal_in(
        &self,
        a: &RType,
        b: &RType,
        mode: EqMode,
        assumed: &mut Vec<(String, String)>,
    ) -> bool {
        if let (RType::Named(x), RType::Named(y)) = (a, b) {
            if x == y || assumed.iter().any(|(p, q)| p == x && q == y) {
                return true;
            }
            assumed.push((x.clone(), y.clone()));
        }
        let (a, b) = match (self.resolve(a), self.resolve(b)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return false,
        };
        let lft_eq = |x: &Lifetime, y: &Lifetime| mode == EqMode::ModuloLifetimes || x == y;
        let lfts_eq = |xs: &[Lifetime], ys: &[Lifetime]| mode == EqMode::ModuloLifetimes || xs == ys;
        let all = |xs: &[RType], ys: &[RType], assumed: &mut Vec<(String, String)>| {
            xs.len() == ys.len()
                && xs.iter().zip(ys).all(|(x, y)| self.type_equal_in(x, y, mode, assumed))
        };
        match (&a, &b) {
            (RType::I32, RType::I32) | (RType::Bool, RType::Bool) | (RType::Void, RType::Void) => {
                true
            }
            (RType::Ref(l1, m1, t1), RType::Ref(l2, m2, t2)) => {
                lft_eq(l1, l2) && m1 == m2 && self.type_equal_in(t1, t2, mode, assumed)
            }
            (RType::Own(t1), RType::Own(t2)) | (RType::Array(t1), RType::Array(t2)) => {
                self.type_equal_in(t1, t2, mode, assumed)
            }
            (RType::Prod(l1, f1), RType::Prod(l2, f2)) | (RType::Sum(l1, f1), RType::Sum(l2, f2)) => {
                lfts_eq(l1, l2) && all(f1, f2, assumed)
            }
            (RType::Fn(x), RType::Fn(y)) => {
                lfts_eq(&x.lifetimes, &y.lifetimes)
                    && all(&x.params, &y.params, assumed)
                    && self.type_equal_in(&x.ret, &y.ret, mode, assumed)
            }
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EqMode {
    Strict,
    ModuloLifetimes,
}

/// Scalars and shared references are duplicated on use; everything else moves.
pub fn is_copy(ty: &RType) -> bool {
    matches!(ty, RType::I32 | RType::Bool | RType::Ref(_, Mutability::Imm, _))
}

fn contains_by_value(ty: &RType, name: &str) -> bool {
    match ty {
        RType::Named(n) => n == name,
        RType::Prod(_, fs) | RType::Sum(_, fs) => fs.iter().any(|t| contains_by_value(t, name)),
        _ => false,
    }
}
