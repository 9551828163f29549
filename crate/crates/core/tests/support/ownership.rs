//! Generated straight-line ownership programs and a direct replay oracle.
//!
//! Programs declare three owners `o0..o2` (all `let mut`, type own(i32))
//! and then run a small statement tree over them. The oracle tracks moves
//! and live borrows per owner by scope depth, independently of the checker.

#![allow(dead_code)]

use krust_core::TypeErrorKind;
use proptest::prelude::*;

pub const OWNERS: usize = 3;

#[derive(Clone, Debug)]
pub enum Stmt {
    Borrow { mutable: bool, owner: usize, body: Vec<Stmt> },
    Move { owner: usize, body: Vec<Stmt> },
    Read(usize),
    Write(usize),
    Block(Vec<Stmt>),
}

pub fn count(ss: &[Stmt]) -> usize {
    ss.iter()
        .map(|s| match s {
            Stmt::Borrow { body, .. } | Stmt::Move { body, .. } | Stmt::Block(body) => 1 + count(body),
            Stmt::Read(_) | Stmt::Write(_) => 1,
        })
        .sum()
}

pub fn stmts() -> impl Strategy<Value = Vec<Stmt>> {
    let owner = 0..OWNERS;
    let leaf = prop_oneof![
        owner.clone().prop_map(Stmt::Read),
        owner.clone().prop_map(Stmt::Write),
    ];
    let stmt = leaf.prop_recursive(3, 10, 3, move |inner| {
        let body = prop::collection::vec(inner, 0..3);
        prop_oneof![
            (any::<bool>(), 0..OWNERS, body.clone())
                .prop_map(|(mutable, owner, body)| Stmt::Borrow { mutable, owner, body }),
            (0..OWNERS, body.clone()).prop_map(|(owner, body)| Stmt::Move { owner, body }),
            body.prop_map(Stmt::Block),
        ]
    });
    prop::collection::vec(stmt, 1..5).prop_filter("3 to 8 statements", |ss| (3..=8).contains(&count(ss)))
}

fn render_list(ss: &[Stmt], fresh: &mut usize, out: &mut String) {
    if ss.is_empty() {
        out.push_str("void");
    }
    for (i, s) in ss.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        render(s, fresh, out);
    }
}

fn render(s: &Stmt, fresh: &mut usize, out: &mut String) {
    match s {
        Stmt::Borrow { mutable, owner, body } => {
            *fresh += 1;
            let m = if *mutable { "mut" } else { "imm" };
            out.push_str(&format!("let r{} = & {m} o{owner} in {{ ", fresh));
            render_list(body, fresh, out);
            out.push_str(" }");
        }
        Stmt::Move { owner, body } => {
            *fresh += 1;
            out.push_str(&format!("let v{} = o{owner} in {{ ", fresh));
            render_list(body, fresh, out);
            out.push_str(" }");
        }
        Stmt::Read(o) => out.push_str(&format!("*o{o}")),
        Stmt::Write(o) => out.push_str(&format!("*o{o} := 1")),
        Stmt::Block(body) => {
            out.push_str("begin ");
            render_list(body, fresh, out);
            out.push_str(" end");
        }
    }
}

pub fn program(ss: &[Stmt]) -> String {
    let mut body = String::new();
    for o in 0..OWNERS {
        body.push_str(&format!("let mut o{o} = new(i32) in "));
    }
    body.push_str("{ ");
    render_list(ss, &mut 0, &mut body);
    body.push_str(" }");
    format!("main :=: fnTy(;;void)\nfun main() newlft\n{body}\nendlft\n")
}

#[derive(Default)]
struct Model {
    moved: [bool; OWNERS],
    /// Live borrows: (owner, mutable, scope depth that releases it).
    borrows: Vec<(usize, bool, usize)>,
    depth: usize,
}

impl Model {
    fn has(&self, o: usize, mutable: bool) -> bool {
        self.borrows.iter().any(|b| b.0 == o && b.1 == mutable)
    }

    fn enter(&mut self) {
        self.depth += 1;
    }

    fn exit(&mut self) {
        let d = self.depth;
        self.borrows.retain(|b| b.2 < d);
        self.depth -= 1;
    }

    fn list(&mut self, ss: &[Stmt]) -> Result<(), TypeErrorKind> {
        ss.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), TypeErrorKind> {
        use TypeErrorKind::*;
        match s {
            Stmt::Read(o) => {
                if self.moved[*o] {
                    return Err(UseOfMoved);
                }
                if self.has(*o, true) {
                    return Err(ConflictingMutBorrow);
                }
                Ok(())
            }
            Stmt::Write(o) => {
                if self.moved[*o] {
                    return Err(UseOfMoved);
                }
                if self.has(*o, true) || self.has(*o, false) {
                    return Err(MutBorrowWhileBorrowed);
                }
                Ok(())
            }
            Stmt::Borrow { mutable, owner, body } => {
                let o = *owner;
                if self.moved[o] {
                    return Err(UseOfMoved);
                }
                if self.has(o, true) {
                    return Err(ConflictingMutBorrow);
                }
                if *mutable && self.has(o, false) {
                    return Err(MutBorrowWhileBorrowed);
                }
                self.enter();
                self.borrows.push((o, *mutable, self.depth));
                let r = self.list(body);
                self.exit();
                r
            }
            Stmt::Move { owner, body } => {
                let o = *owner;
                if self.moved[o] {
                    return Err(UseOfMoved);
                }
                if self.has(o, true) {
                    return Err(ConflictingMutBorrow);
                }
                if self.has(o, false) {
                    return Err(MutBorrowWhileBorrowed);
                }
                self.moved[o] = true;
                self.enter();
                let r = self.list(body);
                self.exit();
                r
            }
            Stmt::Block(body) => {
                self.enter();
                let r = self.list(body);
                self.exit();
                r
            }
        }
    }
}

/// Expected verdict: `Ok` or the kind of the first violation.
pub fn oracle(ss: &[Stmt]) -> Result<(), TypeErrorKind> {
    Model::default().list(ss)
}

/// Checks one generated program against the oracle, plus the structural
/// properties every accepted program must have. Returns a description of
/// the first disagreement.
pub fn agree(ss: &[Stmt]) -> Result<(), String> {
    let src = program(ss);
    let p = krust_core::parse_surface(&src).map_err(|e| format!("parse: {e}\n{src}"))?;
    let got = krust_core::check_program(&p);
    let want = oracle(ss);
    match (&got, want) {
        (Ok(cp), Ok(())) => {
            if let Some(b) = cp.borrow_log.iter().find(|b| b.owner >= b.holder) {
                return Err(format!("order rule broken by {b:?}\n{src}"));
            }
            let expect: Vec<u32> = (0..cp.bindings.len() as u32).collect();
            if cp.bindings != expect {
                return Err(format!("indices not consecutive: {:?}\n{src}", cp.bindings));
            }
            Ok(())
        }
        (Err(es), Err(k)) if es[0].kind == k => Ok(()),
        (Ok(_), Err(k)) => Err(format!("accepted, oracle expects {k}\n{src}")),
        (Err(es), w) => Err(format!("rejected with {}, oracle expects {w:?}\n{src}", es[0])),
    }
}

/// Reference reassignment: owners and one mutable reference are
/// declared in the given order, then the reference is pointed at `target`.
/// The oracle accepts iff `target` was declared before the reference.
pub fn order_program(before: usize, after: usize, target: usize) -> (String, bool) {
    let mut body = String::from("let w0 = new(i32) in ");
    for i in 1..=before {
        body.push_str(&format!("let w{i} = new(i32) in "));
    }
    body.push_str("let mut r = & imm w0 in ");
    for i in 0..after {
        body.push_str(&format!("let w{} = new(i32) in ", before + 1 + i));
    }
    body.push_str(&format!("{{ r := & imm w{target} }}"));
    let src = format!("main :=: fnTy(;;void)\nfun main() newlft\n{body}\nendlft\n");
    (src, target <= before)
}
