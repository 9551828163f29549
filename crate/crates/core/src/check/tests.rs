use super::*;
use crate::syntax::parse_surface;

fn check_src(src: &str) -> Result<CheckedProgram, Vec<TypeError>> {
    check_program(&parse_surface(src).expect("parses"))
}

fn main_body(body: &str) -> String {
    format!("main :=: fnTy(;;void)\nfun main() newlft\n{body}\nendlft\n")
}

fn first_kind(src: &str) -> TypeErrorKind {
    match check_src(src) {
        Ok(_) => panic!("expected rejection of:\n{src}"),
        Err(es) => es[0].kind,
    }
}

fn accepts(src: &str) {
    if let Err(es) = check_src(src) {
        panic!("rejected: {}\n{src}", es[0]);
    }
}

#[test]
fn empty_program() {
    accepts("");
}

#[test]
fn corrected_queue_accepted() {
    accepts(include_str!("../../corpus/queue_corrected.krs"));
}

#[test]
fn owned_queue_moves_q() {
    let es = check_src(include_str!("../../corpus/queue_own.krs")).unwrap_err();
    assert_eq!(es[0].kind, UseOfMoved);
    assert_eq!(es[0].pos.line, 18);
}

#[test]
fn reassigned_reference_rejected() {
    let es = check_src(include_str!("../../corpus/reassign_younger.krs")).unwrap_err();
    assert_eq!((es[0].kind, es[0].pos.line), (BorrowOutlivesOwner, 4));
    let es = check_src(include_str!("../../corpus/reassign_then_mut.krs")).unwrap_err();
    assert_eq!((es[0].kind, es[0].pos.line), (MutBorrowWhileBorrowed, 5));
}

#[test]
fn freeze() {
    accepts(include_str!("../../corpus/freeze.krs"));
    assert_eq!(first_kind(include_str!("../../corpus/freeze_write.krs")), FrozenWrite);
}

#[test]
fn shared_borrows_coexist() {
    accepts(&main_body("let x = new(i32) in { let y = & imm x in { let z = & imm x in void }}"));
}

#[test]
fn second_mut_borrow() {
    let src = main_body("let mut x = new(i32) in { let y = & mut x in { let z = & mut x in void }}");
    assert_eq!(first_kind(&src), ConflictingMutBorrow);
}

#[test]
fn borrow_released_at_block_end() {
    accepts(&main_body(
        "let mut x = new(i32) in { { let y = & mut x in void }; let z = & mut x in void }",
    ));
}

#[test]
fn use_after_move() {
    let src = main_body("let v = new(i32) in { let w = v in { let u = v in void }}");
    assert_eq!(first_kind(&src), UseOfMoved);
    accepts(&main_body("let v = 1 in { let w = v in { let u = v in void }}"));
}

#[test]
fn moved_in_one_branch() {
    let src = main_body("let v = new(i32) in { if true then { let w = v in void } else { void }; v }");
    assert_eq!(first_kind(&src), UseOfMoved);
}

#[test]
fn uninit_use() {
    assert_eq!(first_kind(&main_body("let r in { r + 1 }")), UseOfUninit);
    accepts(&main_body("let r in { r := false; r }"));
}

#[test]
fn assignments() {
    assert_eq!(first_kind(&main_body("let mut b = true in { b := 1 }")), TypeMismatch);
    assert_eq!(first_kind(&main_body("let b = true in { b := false }")), AssignToImmutable);
    accepts(&main_body("let mut b = true in { b := false }"));
    assert_eq!(
        first_kind(&main_body("let x = new(i32) in { let y = & imm x in { *y := 3 } }")),
        AssignToImmutable
    );
}

#[test]
fn inj_tags() {
    let decl = "Option :=: sumTy(bool,i32)\n";
    let ok = format!("{decl}{}", main_body("let r = new(ty(Option)) in { r :=inj 1 false }"));
    accepts(&ok);
    let bad = format!("{decl}{}", main_body("let r = new(ty(Option)) in { r :=inj 3 false }"));
    assert_eq!(first_kind(&bad), InvalidInjTag);
    let bad = format!("{decl}{}", main_body("let r = new(ty(Option)) in { r :=inj 2 true }"));
    assert_eq!(first_kind(&bad), TypeMismatch);
}

#[test]
fn case_arity() {
    let decl = "Option :=: sumTy(bool,i32)\n";
    let bad = format!("{decl}{}", main_body("let r = new(ty(Option)) in { case r of {1, 2, 3} }"));
    assert_eq!(first_kind(&bad), NonExhaustiveCase);
    let outside = format!("{decl}{}", main_body("let r = new(ty(Option)) in { r.1 }"));
    assert_eq!(first_kind(&outside), TypeMismatch);
}

#[test]
fn calls() {
    let src = "f :=: fnTy(;i32,i32;i32)\nfun f(a,b) newlft a + b endlft\n";
    accepts(src);
    let bad = "f :=: fnTy(;i32,i32;i32)\nmain :=: fnTy(;;void)\n\
               fun f(a,b) newlft a + b endlft\nfun main() newlft call f(1) endlft\n";
    assert_eq!(first_kind(bad), ArityMismatch);
    assert_eq!(first_kind(&main_body("call g(1)")), UnknownName);
    let wrong = "f :=: fnTy(;;i32)\nfun f() newlft true endlft\n";
    assert_eq!(first_kind(wrong), TypeMismatch);
}

#[test]
fn returning_a_local_reference() {
    let src = "f :=: fnTy('a;;ref('a,imm,i32))\nfun f() newlft let x = 1 in { & imm x } endlft\n";
    assert_eq!(first_kind(src), BorrowOutlivesOwner);
}

#[test]
fn reborrow_through_parameter_returns() {
    let src = "f :=: fnTy('a;ref('a,imm,i32);ref('a,imm,i32))\nfun f(r) newlft & imm (*r) endlft\n";
    accepts(src);
}

#[test]
fn shadowing_keeps_first_index() {
    let mut ck = Checker::default();
    ck.enter_lifetime();
    let a = ck.fresh_var("x", Mutability::Imm, Some(RType::I32), true);
    let b = ck.fresh_var("x", Mutability::Imm, Some(RType::I32), true);
    assert_eq!((a, b), (0, 1));
    assert_eq!(ck.st.env["x"], 1);
    assert!(ck.st.var_info.contains_key(&0));
    ck.exit_lifetime();
    assert!(ck.st.env.is_empty());
}

#[test]
fn error_display() {
    let es = check_src(include_str!("../../corpus/reassign_younger.krs")).unwrap_err();
    assert!(es[0].to_string().starts_with("error[BorrowOutlivesOwner] 4:"));
}

#[test]
fn rejection_is_stable() {
    let src = include_str!("../../corpus/queue_own.krs");
    assert_eq!(check_src(src).unwrap_err(), check_src(src).unwrap_err());
}
