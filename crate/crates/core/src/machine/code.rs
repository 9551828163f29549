//! Arena form of core expressions used by the machine.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::syntax::{ArithOp, CoreExp, CoreKind, Offset, Order, Pos};

pub type ExpId = u32;
pub type Sym = u32;

#[derive(Clone, Debug)]
pub enum Node {
    Ident(Sym),
    Int(i64),
    Str(String),
    Skip,
    Deref(Order, ExpId),
    Arith(ArithOp, ExpId, ExpId),
    Case(ExpId, Vec<ExpId>),
    Fn { name: Option<Sym>, params: Vec<Sym>, body: ExpId },
    Apply(ExpId, Vec<ExpId>),
    TailCall(ExpId),
    Fork(ExpId),
    EnvAssign(Sym, ExpId),
    MemAssign(ExpId, Order, ExpId),
    Field(ExpId, u64),
    FieldDyn(ExpId, ExpId),
    Allocate(ExpId),
    Seq(ExpId, ExpId),
    Cas(ExpId, ExpId, ExpId),
    Append(ExpId, ExpId),
    Free(ExpId),
}

#[derive(Debug, Default)]
pub struct Code {
    nodes: Vec<Node>,
    pos: Vec<Pos>,
    syms: Vec<String>,
    sym_ids: BTreeMap<String, Sym>,
}

impl Code {
    pub fn node(&self, id: ExpId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn pos(&self, id: ExpId) -> Pos {
        self.pos[id as usize]
    }

    pub fn sym_name(&self, s: Sym) -> &str {
        &self.syms[s as usize]
    }

    pub fn intern(&mut self, name: &str) -> Sym {
        if let Some(s) = self.sym_ids.get(name) {
            return *s;
        }
        let s = self.syms.len() as Sym;
        self.syms.push(name.into());
        self.sym_ids.insert(name.into(), s);
        s
    }

    fn push(&mut self, n: Node, p: Pos) -> ExpId {
        self.nodes.push(n);
        self.pos.push(p);
        (self.nodes.len() - 1) as ExpId
    }

    pub fn add(&mut self, e: &CoreExp) -> ExpId {
        let n = match &e.kind {
            CoreKind::Ident(x) => Node::Ident(self.intern(x)),
            CoreKind::Int(n) => Node::Int(*n),
            CoreKind::Str(s) => Node::Str(s.clone()),
            CoreKind::Skip => Node::Skip,
            CoreKind::Deref(o, a) => Node::Deref(*o, self.add(a)),
            CoreKind::Arith(op, a, b) => {
                let a = self.add(a);
                Node::Arith(*op, a, self.add(b))
            }
            CoreKind::Case(s, arms) => {
                let s = self.add(s);
                Node::Case(s, arms.iter().map(|a| self.add(a)).collect())
            }
            CoreKind::FnDef { name, params, body } => Node::Fn {
                name: Some(self.intern(name)),
                params: params.iter().map(|p| self.intern(p)).collect(),
                body: self.add(body),
            },
            CoreKind::AnonFn { params, body } => Node::Fn {
                name: None,
                params: params.iter().map(|p| self.intern(p)).collect(),
                body: self.add(body),
            },
            CoreKind::Apply(f, args) => {
                let f = self.add(f);
                Node::Apply(f, args.iter().map(|a| self.add(a)).collect())
            }
            CoreKind::TailCall(a) => Node::TailCall(self.add(a)),
            CoreKind::Fork(a) => Node::Fork(self.add(a)),
            CoreKind::EnvAssign(x, a) => {
                let x = self.intern(x);
                Node::EnvAssign(x, self.add(a))
            }
            CoreKind::MemAssign(a, o, b) => {
                let a = self.add(a);
                Node::MemAssign(a, *o, self.add(b))
            }
            CoreKind::Field(a, Offset::Const(i)) => Node::Field(self.add(a), *i),
            CoreKind::Field(a, Offset::Dyn(i)) => {
                let a = self.add(a);
                Node::FieldDyn(a, self.add(i))
            }
            CoreKind::Allocate(a) => Node::Allocate(self.add(a)),
            CoreKind::Seq(a, b) => {
                let a = self.add(a);
                Node::Seq(a, self.add(b))
            }
            CoreKind::Cas(a, b, c) => {
                let a = self.add(a);
                let b = self.add(b);
                Node::Cas(a, b, self.add(c))
            }
            CoreKind::Append(a, b) => {
                let a = self.add(a);
                Node::Append(a, self.add(b))
            }
            CoreKind::Free(a) => Node::Free(self.add(a)),
        };
        self.push(n, e.pos)
    }

    /// Subexpressions evaluated before the node itself fires, in order.
    pub fn operands(&self, id: ExpId) -> Vec<ExpId> {
        match self.node(id) {
            Node::Deref(_, a)
            | Node::Field(a, _)
            | Node::Allocate(a)
            | Node::Free(a)
            | Node::EnvAssign(_, a)
            | Node::Case(a, _)
            | Node::Seq(a, _) => alloc::vec![*a],
            Node::Arith(_, a, b)
            | Node::MemAssign(a, _, b)
            | Node::FieldDyn(a, b)
            | Node::Append(a, b) => alloc::vec![*a, *b],
            Node::Cas(a, b, c) => alloc::vec![*a, *b, *c],
            Node::Apply(f, args) => {
                let mut v = args.clone();
                v.push(*f);
                v
            }
            _ => Vec::new(),
        }
    }
}
