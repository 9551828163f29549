//! Block memory with per-block reader/writer accounting.
//!
//! Every block has an address (never reused), a unit count and a store of
//! values. Non-atomic accesses are split into a begin and a finish step;
//! while one is in flight the block's `(R, W)` status is nonzero and any
//! conflicting access from another thread is reported as a race.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Location(u64, u64),
    ClosureRef(u64),
    Str(String),
    Unit,
}

impl Value {
    pub fn bool(b: bool) -> Value {
        Value::Int(b as i64)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Location(a, i) => write!(f, "location({a},{i})"),
            Value::ClosureRef(c) => write!(f, "cr({c})"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Unit => f.write_str("()"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccessKind {
    NaRead,
    NaWrite,
    AtRead,
    AtWrite,
    Cas,
    Append,
    Free,
    Alloc,
}

impl AccessKind {
    pub fn is_write(self) -> bool {
        !matches!(self, AccessKind::NaRead | AccessKind::AtRead)
    }
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::NaRead => "na-read",
            AccessKind::NaWrite => "na-write",
            AccessKind::AtRead => "at-read",
            AccessKind::AtWrite => "at-write",
            AccessKind::Cas => "cas",
            AccessKind::Append => "append",
            AccessKind::Free => "free",
            AccessKind::Alloc => "allocate",
        })
    }
}

/// Two overlapping conflicting accesses to one block.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RaceReport {
    pub addr: u64,
    /// Offset of the access that detected the race; `None` for block-wide
    /// operations.
    pub offset: Option<u64>,
    /// The access already in flight.
    pub first: (u32, AccessKind),
    /// The access that started while `first` was in flight.
    pub second: (u32, AccessKind),
}

impl fmt::Display for RaceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "race on block {}", self.addr)?;
        if let Some(o) = self.offset {
            write!(f, " offset {o}")?;
        }
        write!(
            f,
            ": thread {} {} overlaps thread {} {}",
            self.second.0, self.second.1, self.first.0, self.first.1
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("use after free of block {0}")]
    UseAfterFree(u64),
    #[error("double free of block {0}")]
    DoubleFree(u64),
    #[error("offset {offset} out of bounds for block {addr} of {bnum} units")]
    OutOfBounds { addr: u64, offset: u64, bnum: u64 },
    #[error("read of uninitialized unit {offset} of block {addr}")]
    UninitializedUnit { addr: u64, offset: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Unit {
    pub value: Value,
    /// False until the first explicit write.
    pub written: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block {
    pub bnum: u64,
    pub store: BTreeMap<u64, Unit>,
}

/// Result of a memory operation plus the race it triggered, if any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Access<T> {
    pub value: T,
    pub race: Option<RaceReport>,
}

impl<T> Access<T> {
    fn new(value: T, race: Option<RaceReport>) -> Self {
        Access { value, race }
    }
}

/// An in-flight non-atomic access, completed by the matching `*_finish`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ticket {
    pub tid: u32,
    pub addr: u64,
    pub offset: u64,
    /// `Some(v)` for a write.
    pub write: Option<Value>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Memory {
    blk_num: u64,
    status: BTreeMap<u64, (u32, u32)>,
    blocks: BTreeMap<u64, Block>,
    inflight: BTreeMap<u64, Vec<(u32, AccessKind)>>,
    strict_uninit: bool,
}

impl Memory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads of units never explicitly written fail with `UninitializedUnit`.
    pub fn set_strict_uninit(&mut self, on: bool) {
        self.strict_uninit = on;
    }

    pub fn blk_num(&self) -> u64 {
        self.blk_num
    }

    pub fn status(&self, addr: u64) -> Option<(u32, u32)> {
        self.status.get(&addr).copied()
    }

    pub fn block(&self, addr: u64) -> Option<&Block> {
        self.blocks.get(&addr)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (u64, &Block)> {
        self.blocks.iter().map(|(a, b)| (*a, b))
    }

    /// True when no access is in flight anywhere.
    pub fn is_quiescent(&self) -> bool {
        self.status.values().all(|s| *s == (0, 0))
    }

    /// Value stored at `(addr, offset)` without touching the status.
    pub fn peek(&self, addr: u64, offset: u64) -> Option<&Value> {
        self.blocks.get(&addr)?.store.get(&offset).map(|u| &u.value)
    }

    fn conflict(&self, addr: u64, tid: u32, writers_only: bool) -> Option<(u32, AccessKind)> {
        self.inflight
            .get(&addr)?
            .iter()
            .find(|(t, k)| *t != tid && (!writers_only || k.is_write()))
            .copied()
    }

    fn race(
        &self,
        addr: u64,
        offset: Option<u64>,
        tid: u32,
        kind: AccessKind,
    ) -> Option<RaceReport> {
        let (r, w) = self.status.get(&addr).copied().unwrap_or((0, 0));
        let hit = if kind.is_write() { r > 0 || w > 0 } else { w > 0 };
        if !hit {
            return None;
        }
        let first = self
            .conflict(addr, tid, !kind.is_write())
            .or_else(|| self.conflict(addr, u32::MAX, !kind.is_write()))
            .unwrap_or((tid, kind));
        Some(RaceReport { addr, offset, first, second: (tid, kind) })
    }

    fn check(&self, addr: u64, offset: u64) -> Result<&Block, MemError> {
        let b = self.blocks.get(&addr).ok_or(MemError::UseAfterFree(addr))?;
        if offset >= b.bnum {
            return Err(MemError::OutOfBounds { addr, offset, bnum: b.bnum });
        }
        Ok(b)
    }

    fn exists(&self, addr: u64) -> Result<(), MemError> {
        if self.blocks.contains_key(&addr) || self.status.contains_key(&addr) {
            Ok(())
        } else {
            Err(MemError::UseAfterFree(addr))
        }
    }

    fn read_unit(&self, addr: u64, offset: u64) -> Result<Value, MemError> {
        let b = self.check(addr, offset)?;
        match b.store.get(&offset) {
            Some(u) if u.written || !self.strict_uninit => Ok(u.value.clone()),
            _ => Err(MemError::UninitializedUnit { addr, offset }),
        }
    }

    fn store(&mut self, addr: u64, offset: u64, v: Value) -> Result<(), MemError> {
        self.check(addr, offset)?;
        let b = self.blocks.get_mut(&addr).expect("checked");
        b.store.insert(offset, Unit { value: v, written: true });
        Ok(())
    }

    fn enter(&mut self, addr: u64, tid: u32, kind: AccessKind) {
        let s = self.status.entry(addr).or_insert((0, 0));
        if kind.is_write() {
            s.1 += 1;
        } else {
            s.0 += 1;
        }
        self.inflight.entry(addr).or_default().push((tid, kind));
    }

    fn leave(&mut self, addr: u64, tid: u32, kind: AccessKind) {
        if let Some(s) = self.status.get_mut(&addr) {
            if kind.is_write() {
                s.1 = s.1.saturating_sub(1);
            } else {
                s.0 = s.0.saturating_sub(1);
            }
        }
        if let Some(v) = self.inflight.get_mut(&addr) {
            if let Some(i) = v.iter().position(|e| *e == (tid, kind)) {
                v.remove(i);
            }
            if v.is_empty() {
                self.inflight.remove(&addr);
            }
        }
    }

    /// First half of allocation: reserves the address, status `(0,1)`.
    pub fn allocate_begin(&mut self, tid: u32) -> u64 {
        let addr = self.blk_num;
        self.blk_num += 1;
        self.enter(addr, tid, AccessKind::Alloc);
        addr
    }

    /// Second half: creates `size` units holding `Int 0`, status `(0,0)`.
    pub fn allocate_finish(&mut self, tid: u32, addr: u64, size: u64) -> Value {
        let store = (0..size).map(|i| (i, Unit { value: Value::Int(0), written: false })).collect();
        self.blocks.insert(addr, Block { bnum: size, store });
        self.leave(addr, tid, AccessKind::Alloc);
        Value::Location(addr, 0)
    }

    pub fn allocate(&mut self, size: u64) -> Value {
        let addr = self.allocate_begin(0);
        self.allocate_finish(0, addr, size)
    }

    pub fn read_na_begin(
        &mut self,
        tid: u32,
        addr: u64,
        offset: u64,
    ) -> Result<Access<Ticket>, MemError> {
        self.check(addr, offset)?;
        let race = self.race(addr, Some(offset), tid, AccessKind::NaRead);
        self.enter(addr, tid, AccessKind::NaRead);
        Ok(Access::new(Ticket { tid, addr, offset, write: None }, race))
    }

    pub fn read_na_finish(&mut self, t: &Ticket) -> Result<Value, MemError> {
        self.leave(t.addr, t.tid, AccessKind::NaRead);
        self.read_unit(t.addr, t.offset)
    }

    pub fn write_na_begin(
        &mut self,
        tid: u32,
        addr: u64,
        offset: u64,
        v: Value,
    ) -> Result<Access<Ticket>, MemError> {
        self.check(addr, offset)?;
        let race = self.race(addr, Some(offset), tid, AccessKind::NaWrite);
        self.enter(addr, tid, AccessKind::NaWrite);
        Ok(Access::new(Ticket { tid, addr, offset, write: Some(v) }, race))
    }

    pub fn write_na_finish(&mut self, t: &Ticket) -> Result<(), MemError> {
        self.leave(t.addr, t.tid, AccessKind::NaWrite);
        let v = t.write.clone().unwrap_or(Value::Unit);
        self.store(t.addr, t.offset, v)
    }

    pub fn read_at(&mut self, tid: u32, addr: u64, offset: u64) -> Result<Access<Value>, MemError> {
        self.check(addr, offset)?;
        let race = self.race(addr, Some(offset), tid, AccessKind::AtRead);
        Ok(Access::new(self.read_unit(addr, offset)?, race))
    }

    pub fn write_at(
        &mut self,
        tid: u32,
        addr: u64,
        offset: u64,
        v: Value,
    ) -> Result<Access<()>, MemError> {
        self.check(addr, offset)?;
        let race = self.race(addr, Some(offset), tid, AccessKind::AtWrite);
        self.store(addr, offset, v)?;
        Ok(Access::new((), race))
    }

    /// Atomic compare-and-swap; yields `Int 1` on success, `Int 0` otherwise.
    pub fn cas(
        &mut self,
        tid: u32,
        addr: u64,
        offset: u64,
        expected: &Value,
        new: Value,
    ) -> Result<Access<Value>, MemError> {
        self.check(addr, offset)?;
        let race = self.race(addr, Some(offset), tid, AccessKind::Cas);
        let cur = self.read_unit(addr, offset)?;
        let ok = cur == *expected;
        if ok {
            self.store(addr, offset, new)?;
        }
        Ok(Access::new(Value::bool(ok), race))
    }

    /// Adds a unit at the end of the block; yields its offset.
    pub fn append(&mut self, tid: u32, addr: u64, v: Value) -> Result<Access<u64>, MemError> {
        self.exists(addr)?;
        let race = self.race(addr, None, tid, AccessKind::Append);
        let b = self.blocks.get_mut(&addr).ok_or(MemError::UseAfterFree(addr))?;
        let off = b.bnum;
        b.store.insert(off, Unit { value: v, written: true });
        b.bnum += 1;
        Ok(Access::new(off, race))
    }

    /// Removes the block. A free with accesses in flight is reported as a race
    /// and still performed.
    pub fn free(&mut self, tid: u32, addr: u64) -> Result<Access<()>, MemError> {
        if !self.blocks.contains_key(&addr) {
            return Err(if addr < self.blk_num {
                MemError::DoubleFree(addr)
            } else {
                MemError::UseAfterFree(addr)
            });
        }
        let race = self.race(addr, None, tid, AccessKind::Free);
        self.blocks.remove(&addr);
        self.status.remove(&addr);
        self.inflight.remove(&addr);
        Ok(Access::new((), race))
    }

    /// Canonical text form: blocks by address, units by offset.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (addr, b) in &self.blocks {
            let _ = writeln!(out, "block addr({addr}) bnum {}", b.bnum);
            for (off, u) in &b.store {
                let _ = writeln!(out, "  {off} |-> {}", u.value);
            }
        }
        out
    }
}
