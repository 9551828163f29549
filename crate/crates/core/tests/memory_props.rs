mod support;

use std::path::Path;

use krust_core::{load, parse_core, run, MemError, Memory, RunOptions, Schedule, Value};
use proptest::prelude::*;
use support::corpus;
use support::memory::{ops, replay, stepped};

fn corpus_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/corpus"))
}

#[test]
fn corpus_counters_and_quiescence() {
    let entries = corpus::load(corpus_dir());
    let names: Vec<_> = entries.iter().map(|e| e.name.as_str()).collect();
    assert!(entries.len() >= 7, "{names:?}");
    for e in &entries {
        for seed in [None, Some(1), Some(2), Some(3)] {
            if let Err(msg) = stepped(&e.program, seed, 2_000_000) {
                panic!("{} (seed {seed:?}): {msg}", e.name);
            }
        }
    }
}

#[test]
fn corpus_results() {
    let want = [
        ("append_free.kcl", Value::Location(1, 0)),
        ("cas_counter.kcl", Value::Int(3)),
        ("closures.kcl", Value::Int(321 * 2)),
        ("countdown.kcl", Value::Int(50_005_000)),
        ("queue.kcl", Value::Int(1)),
    ];
    let entries = corpus::load(corpus_dir());
    for (name, v) in want {
        let e = entries.iter().find(|e| e.name == name).unwrap();
        for schedule in [Schedule::RoundRobin, Schedule::Random(7)] {
            let opts = RunOptions { schedule, ..RunOptions::default() };
            let fc = run(load(&e.program), &opts).unwrap();
            assert_eq!(fc.result(), &v, "{name}");
            assert!(fc.memory.is_quiescent());
        }
    }
}

fn runtime_error(src: &str) -> String {
    let p = parse_core(src).unwrap();
    run(load(&p), &RunOptions::default()).unwrap_err().error.to_string()
}

#[test]
fn use_after_free_in_program() {
    let msg = runtime_error("(fn (x){free(x); *na x})(allocate(1))");
    assert!(msg.contains(&MemError::UseAfterFree(0).to_string()), "{msg}");
    let msg = runtime_error("(fn (x){free(x); x :=at 1})(allocate(1))");
    assert!(msg.contains(&MemError::UseAfterFree(0).to_string()), "{msg}");
    let msg = runtime_error("(fn (x){free(x); append(x, 1)})(allocate(1))");
    assert!(msg.contains(&MemError::UseAfterFree(0).to_string()), "{msg}");
}

#[test]
fn double_free_in_program() {
    let msg = runtime_error("(fn (x){free(x); free(x)})(allocate(1))");
    assert!(msg.contains(&MemError::DoubleFree(0).to_string()), "{msg}");
}

#[test]
fn free_leaves_other_blocks() {
    let p = parse_core("(fn (x, y){free(x); y :=na 4; *na y})(allocate(1), allocate(1))").unwrap();
    let fc = run(load(&p), &RunOptions::default()).unwrap();
    assert_eq!(fc.result(), &Value::Int(4));
    assert_eq!(fc.dump(), "block addr(1) bnum 1\n  0 |-> 4\n");
}

#[test]
fn free_then_read_and_double_free() {
    let mut m = Memory::new();
    m.allocate(2);
    m.free(0, 0).unwrap();
    assert_eq!(m.read_at(0, 0, 0), Err(MemError::UseAfterFree(0)));
    assert_eq!(m.read_na_begin(0, 0, 0).map(|a| a.value), Err(MemError::UseAfterFree(0)));
    assert_eq!(m.free(0, 0), Err(MemError::DoubleFree(0)));
    assert_eq!(m.free(0, 9), Err(MemError::UseAfterFree(9)));
    assert_eq!(m.allocate(1), Value::Location(1, 0));
}

#[test]
fn append_grows_block() {
    let mut m = Memory::new();
    m.allocate(2);
    let a = m.append(0, 0, Value::Int(7)).unwrap();
    assert_eq!((a.value, a.race), (2, None));
    assert_eq!(m.block(0).unwrap().bnum, 3);
    assert_eq!(m.read_at(0, 0, 2).unwrap().value, Value::Int(7));
}

#[test]
fn append_during_read_races() {
    let mut m = Memory::new();
    m.allocate(1);
    let t = m.read_na_begin(0, 0, 0).unwrap().value;
    assert!(m.append(1, 0, Value::Int(1)).unwrap().race.is_some());
    m.read_na_finish(&t).unwrap();
    assert!(m.is_quiescent());
}

#[test]
fn na_write_then_read() {
    let mut m = Memory::new();
    m.allocate(3);
    let t = m.write_na_begin(0, 0, 2, Value::Int(5)).unwrap().value;
    assert_eq!(m.status(0), Some((0, 1)));
    m.write_na_finish(&t).unwrap();
    let t = m.read_na_begin(0, 0, 2).unwrap().value;
    assert_eq!(m.status(0), Some((1, 0)));
    assert_eq!(m.read_na_finish(&t), Ok(Value::Int(5)));
    assert!(m.is_quiescent());
}

#[test]
fn atomic_and_cas() {
    let mut m = Memory::new();
    m.allocate(1);
    m.write_at(0, 0, 0, Value::Int(5)).unwrap();
    assert_eq!(m.cas(0, 0, 0, &Value::Int(6), Value::Int(9)).unwrap().value, Value::Int(0));
    assert_eq!(m.peek(0, 0), Some(&Value::Int(5)));
    assert_eq!(m.cas(0, 0, 0, &Value::Int(5), Value::Int(9)).unwrap().value, Value::Int(1));
    assert_eq!(m.read_at(1, 0, 0).unwrap().value, Value::Int(9));
}

#[test]
fn free_while_reading_races() {
    let mut m = Memory::new();
    m.allocate(1);
    m.read_na_begin(0, 0, 0).unwrap();
    assert!(m.free(1, 0).unwrap().race.is_some());
    assert!(m.is_quiescent());
}

#[test]
fn out_of_bounds() {
    let mut m = Memory::new();
    m.allocate(2);
    assert_eq!(
        m.write_at(0, 0, 2, Value::Int(1)),
        Err(MemError::OutOfBounds { addr: 0, offset: 2, bnum: 2 })
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn memory_matches_model(ops in ops()) {
        replay(&ops).map_err(TestCaseError::fail)?;
    }
}
