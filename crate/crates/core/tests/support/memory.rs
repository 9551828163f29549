//! Status-counter checks over whole runs and a reference model for
//! sequences of memory operations.

#![allow(dead_code)]

use krust_core::memory::Ticket;
use krust_core::syntax::CoreProgram;
use krust_core::{load, MemError, Memory, Value};
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Steps `p` to termination, picking threads with `seed` (round-robin when
/// `None`). After every step each block's `R + W` must not exceed the number
/// of threads, since a thread has at most one access in flight. Returns the
/// final result of thread 0.
pub fn stepped(p: &CoreProgram, seed: Option<u64>, budget: u64) -> Result<Value, String> {
    let mut m = load(p);
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut rr = 0usize;
    for _ in 0..budget {
        let runnable = m.runnable();
        if runnable.is_empty() {
            if !m.memory().is_quiescent() {
                return Err(format!("not quiescent at end:\n{}", m.memory().dump()));
            }
            return Ok(m.results().into_iter().find(|r| r.0 == 0).map(|r| r.1).unwrap_or(Value::Unit));
        }
        let tid = match rng.as_mut() {
            Some(r) => runnable[(r.next_u64() % runnable.len() as u64) as usize],
            None => {
                rr += 1;
                runnable[rr % runnable.len()]
            }
        };
        m.step(tid).map_err(|e| format!("runtime error: {e}"))?;
        let threads = m.threads().len() as u32;
        for a in 0..m.memory().blk_num() {
            if let Some((r, w)) = m.memory().status(a) {
                if r + w > threads {
                    return Err(format!("block {a} status ({r},{w}) with {threads} threads"));
                }
            }
        }
    }
    Err("step budget exhausted".into())
}

#[derive(Clone, Debug)]
pub enum Op {
    Alloc(u64),
    Begin { tid: u32, write: bool, blk: u64, off: u64, v: i64 },
    Finish(usize),
    ReadAt { tid: u32, blk: u64, off: u64 },
    WriteAt { tid: u32, blk: u64, off: u64, v: i64 },
    Cas { tid: u32, blk: u64, off: u64, expected: i64, v: i64 },
    Append { tid: u32, blk: u64, v: i64 },
    Free { tid: u32, blk: u64 },
}

pub fn ops() -> impl Strategy<Value = Vec<Op>> {
    let tid = 0u32..3;
    let blk = 0u64..6;
    let off = 0u64..5;
    let v = 0i64..4;
    let op = prop_oneof![
        2 => (0u64..4).prop_map(Op::Alloc),
        3 => (tid.clone(), any::<bool>(), blk.clone(), off.clone(), v.clone())
            .prop_map(|(tid, write, blk, off, v)| Op::Begin { tid, write, blk, off, v }),
        3 => (0usize..4).prop_map(Op::Finish),
        1 => (tid.clone(), blk.clone(), off.clone()).prop_map(|(tid, blk, off)| Op::ReadAt { tid, blk, off }),
        1 => (tid.clone(), blk.clone(), off.clone(), v.clone())
            .prop_map(|(tid, blk, off, v)| Op::WriteAt { tid, blk, off, v }),
        1 => (tid.clone(), blk.clone(), off, v.clone(), v.clone())
            .prop_map(|(tid, blk, off, expected, v)| Op::Cas { tid, blk, off, expected, v }),
        1 => (tid.clone(), blk.clone(), v).prop_map(|(tid, blk, v)| Op::Append { tid, blk, v }),
        1 => (tid, blk).prop_map(|(tid, blk)| Op::Free { tid, blk }),
    ];
    prop::collection::vec(op, 1..40)
}

struct Pending {
    ticket: Ticket,
    write: bool,
}

/// Model: live blocks as plain vectors, in-flight accesses as a list.
#[derive(Default)]
struct Model {
    blocks: Vec<Option<Vec<i64>>>,
    pending: Vec<(u32, u64, u64, Option<i64>)>,
}

impl Model {
    fn at(&self, blk: u64, off: u64) -> Result<(), MemError> {
        match self.blocks.get(blk as usize) {
            Some(Some(b)) if off < b.len() as u64 => Ok(()),
            Some(Some(b)) => Err(MemError::OutOfBounds { addr: blk, offset: off, bnum: b.len() as u64 }),
            _ => Err(MemError::UseAfterFree(blk)),
        }
    }

    fn status(&self, blk: u64) -> Option<(u32, u32)> {
        self.blocks.get(blk as usize)?.as_ref()?;
        let mine = self.pending.iter().filter(|p| p.1 == blk);
        let w = mine.clone().filter(|p| p.3.is_some()).count() as u32;
        Some((mine.count() as u32 - w, w))
    }

    fn racy(&self, blk: u64, write: bool) -> bool {
        let (r, w) = self.status(blk).unwrap_or((0, 0));
        if write { r + w > 0 } else { w > 0 }
    }
}

fn int(r: Result<Value, MemError>) -> Result<i64, MemError> {
    r.map(|v| match v {
        Value::Int(n) => n,
        other => panic!("non-int {other:?}"),
    })
}

/// Replays `ops` on a fresh [`Memory`] and on the model, comparing results,
/// race flags and every block's status after each operation.
pub fn replay(ops: &[Op]) -> Result<(), String> {
    let mut mem = Memory::new();
    let mut model = Model::default();
    let mut tickets: Vec<Pending> = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        let fail = |what: String| Err(format!("op {i} {op:?}: {what}"));
        match op.clone() {
            Op::Alloc(n) => {
                let got = mem.allocate(n);
                let want = Value::Location(model.blocks.len() as u64, 0);
                if got != want {
                    return fail(format!("allocated {got:?}, want {want:?}"));
                }
                model.blocks.push(Some(vec![0; n as usize]));
            }
            Op::Begin { tid, write, blk, off, v } => {
                if model.pending.iter().any(|p| p.0 == tid) {
                    continue;
                }
                let want = model.at(blk, off).map(|_| model.racy(blk, write));
                let got = if write {
                    mem.write_na_begin(tid, blk, off, Value::Int(v))
                } else {
                    mem.read_na_begin(tid, blk, off)
                };
                match (got, want) {
                    (Ok(a), Ok(r)) if a.race.is_some() == r => {
                        tickets.push(Pending { ticket: a.value, write });
                        model.pending.push((tid, blk, off, write.then_some(v)));
                    }
                    (Err(e), Err(w)) if e == w => {}
                    (g, w) => return fail(format!("got {g:?}, want {w:?}")),
                }
            }
            Op::Finish(k) => {
                if tickets.is_empty() {
                    continue;
                }
                let k = k % tickets.len();
                let t = tickets.remove(k);
                let (_, blk, off, wv) = model.pending.remove(k);
                let live = model.at(blk, off);
                if t.write {
                    let got = mem.write_na_finish(&t.ticket);
                    if got != live {
                        return fail(format!("write finish {got:?}, want {live:?}"));
                    }
                    if live.is_ok() {
                        model.blocks[blk as usize].as_mut().unwrap()[off as usize] = wv.unwrap();
                    }
                } else {
                    let got = int(mem.read_na_finish(&t.ticket));
                    let want = live.map(|_| model.blocks[blk as usize].as_ref().unwrap()[off as usize]);
                    if got != want {
                        return fail(format!("read finish {got:?}, want {want:?}"));
                    }
                }
            }
            Op::ReadAt { tid, blk, off } => {
                let want = model
                    .at(blk, off)
                    .map(|_| (model.blocks[blk as usize].as_ref().unwrap()[off as usize], model.racy(blk, false)));
                let got = mem.read_at(tid, blk, off).and_then(|a| Ok((int(Ok(a.value))?, a.race.is_some())));
                if got != want {
                    return fail(format!("got {got:?}, want {want:?}"));
                }
            }
            Op::WriteAt { tid, blk, off, v } => {
                let want = model.at(blk, off).map(|_| model.racy(blk, true));
                let got = mem.write_at(tid, blk, off, Value::Int(v)).map(|a| a.race.is_some());
                if got != want {
                    return fail(format!("got {got:?}, want {want:?}"));
                }
                if want.is_ok() {
                    model.blocks[blk as usize].as_mut().unwrap()[off as usize] = v;
                }
            }
            Op::Cas { tid, blk, off, expected, v } => {
                let want = model.at(blk, off).map(|_| {
                    let cur = model.blocks[blk as usize].as_ref().unwrap()[off as usize];
                    ((cur == expected) as i64, model.racy(blk, true))
                });
                let got = mem
                    .cas(tid, blk, off, &Value::Int(expected), Value::Int(v))
                    .and_then(|a| Ok((int(Ok(a.value))?, a.race.is_some())));
                if got != want {
                    return fail(format!("got {got:?}, want {want:?}"));
                }
                if matches!(want, Ok((1, _))) {
                    model.blocks[blk as usize].as_mut().unwrap()[off as usize] = v;
                }
            }
            Op::Append { tid, blk, v } => {
                let want = match model.blocks.get(blk as usize) {
                    Some(Some(b)) => Ok((b.len() as u64, model.racy(blk, true))),
                    _ => Err(MemError::UseAfterFree(blk)),
                };
                let got = mem.append(tid, blk, Value::Int(v)).map(|a| (a.value, a.race.is_some()));
                if got != want {
                    return fail(format!("got {got:?}, want {want:?}"));
                }
                if want.is_ok() {
                    model.blocks[blk as usize].as_mut().unwrap().push(v);
                }
            }
            Op::Free { tid, blk } => {
                let want = match model.blocks.get(blk as usize) {
                    Some(Some(_)) => Ok(model.racy(blk, true)),
                    Some(None) => Err(MemError::DoubleFree(blk)),
                    None => Err(MemError::UseAfterFree(blk)),
                };
                let got = mem.free(tid, blk).map(|a| a.race.is_some());
                if got != want {
                    return fail(format!("got {got:?}, want {want:?}"));
                }
                if want.is_ok() {
                    model.blocks[blk as usize] = None;
                }
            }
        }
        for a in 0..model.blocks.len() as u64 + 1 {
            if mem.status(a) != model.status(a) {
                return fail(format!("status of {a}: {:?} vs model {:?}", mem.status(a), model.status(a)));
            }
        }
        if mem.is_quiescent() != model.pending.iter().all(|p| model.status(p.1).is_none()) {
            return fail("quiescence disagrees".into());
        }
    }
    Ok(())
}
