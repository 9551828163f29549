#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus")
}

pub fn corpus(name: &str) -> String {
    corpus_dir().join(name).display().to_string()
}

pub fn golden(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name).display().to_string()
}

pub fn path(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Debug, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

impl Output {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }

    pub fn err(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }
}

pub fn krust(args: &[&str]) -> Output {
    let o = Command::new(env!("CARGO_BIN_EXE_krust")).args(args).output().expect("spawn krust");
    Output { code: o.status.code().unwrap_or(-1), stdout: o.stdout, stderr: o.stderr }
}

/// Final memory of the queue program.
pub const QUEUE_DUMP: &str = "\
block addr(0) bnum 4
  0 |-> 5
  1 |-> 1
  2 |-> 5
  3 |-> location(1,0)
block addr(1) bnum 5
  0 |-> 6
  1 |-> 5
  2 |-> 4
  3 |-> 3
  4 |-> 2
block addr(2) bnum 2
  0 |-> 2
  1 |-> 6
";

pub const GOLDEN_ROWS: &[&str] = &[
    "let_new", "new_array", "new_sum", "inj", "seq", "if", "deref", "field", "sum_case", "env_assign",
    "borrow", "call", "queue",
];
