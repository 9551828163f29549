//! Small-step abstract machine for the core language.
//!
//! Each thread has a control (the expression being evaluated or a value
//! being returned), a continuation `k` of pending frames, an environment and
//! a call stack of saved environments. One [`Machine::step`] applies exactly
//! one rewrite to one thread; memory operations that take two micro-steps
//! (non-atomic reads and writes, allocation) leave the thread in a
//! `*Finish` control between them so other threads can interleave.

mod code;

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use code::{Code, ExpId, Node, Sym};

use crate::memory::{Access, MemError, Memory, RaceReport, Ticket, Value};
use crate::syntax::{ArithOp, CoreProgram, Order, Pos};

pub type Env = BTreeMap<Sym, Value>;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Closure {
    pub id: u64,
    pub context: Env,
    pub params: Vec<Sym>,
    pub body: ExpId,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Frame {
    /// Operands of `node` evaluated so far.
    Pending { node: ExpId, vals: Vec<Value>, tail: bool },
    /// Restores the caller environment from the call stack.
    Return,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Control {
    Eval(ExpId),
    Ret(Value),
    Bind { body: ExpId, params: Vec<Sym>, args: Vec<Value>, pushed: bool, caller: Option<Env> },
    ReadFinish(ExpId, Ticket),
    WriteFinish(ExpId, Ticket),
    AllocFinish { addr: u64, size: u64 },
    Done(Value),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Thread {
    pub tid: u32,
    control: Control,
    k: Vec<Frame>,
    env: Env,
    clstack: Vec<Env>,
}

impl Thread {
    fn new(tid: u32, control: Control, env: Env) -> Self {
        Thread { tid, control, k: Vec::new(), env, clstack: Vec::new() }
    }

    pub fn is_done(&self) -> bool {
        matches!(self.control, Control::Done(_))
    }

    pub fn result(&self) -> Option<&Value> {
        match &self.control {
            Control::Done(v) => Some(v),
            _ => None,
        }
    }

    pub fn clstack_depth(&self) -> usize {
        self.clstack.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct State {
    threads: Vec<Thread>,
    cr_cnt: u64,
    funclosure: BTreeMap<Sym, u64>,
    closures: Vec<Closure>,
    memory: Memory,
    next_tid: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RuntimeErrorKind {
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error("{0} is not a closure")]
    NotAClosure(Value),
    #[error("too many arguments: {extra} left over after binding all parameters")]
    TooManyArgs { extra: usize },
    #[error("arithmetic on non-integer values {0} and {1}")]
    NonIntArith(Value, Value),
    #[error("case selector {value} out of range for {arms} branches")]
    CaseOutOfRange { value: Value, arms: usize },
    #[error("{0} is not a location")]
    NotALocation(Value),
    #[error("{0} is not a valid size or offset")]
    BadInt(Value),
    #[error("division by zero")]
    DivideByZero,
    #[error(transparent)]
    Memory(#[from] MemError),
    #[error("{0}")]
    Race(RaceReport),
    #[error("step budget of {0} exhausted")]
    StepBudgetExceeded(u64),
    #[error("search bound of {0} steps exceeded")]
    BoundExceeded(u64),
    #[error("schedule names thread {0}, which cannot run")]
    BadTrace(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuntimeError {
    pub kind: RuntimeErrorKind,
    pub tid: Option<u32>,
    pub pos: Option<Pos>,
}

impl RuntimeError {
    fn global(kind: RuntimeErrorKind) -> Self {
        RuntimeError { kind, tid: None, pos: None }
    }
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(t) = self.tid {
            write!(f, "thread {t}")?;
            if let Some(p) = self.pos {
                write!(f, " at {p}")?;
            }
            f.write_str(": ")?;
        }
        write!(f, "{}", self.kind)
    }
}

impl core::error::Error for RuntimeError {}

/// What one step did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepInfo {
    pub rule: &'static str,
    pub race: Option<RaceReport>,
}

#[derive(Clone, Debug)]
pub struct Machine {
    code: Rc<Code>,
    st: State,
}

/// Loads a program: one thread evaluating the whole program, no closures,
/// fresh memory.
pub fn load(p: &CoreProgram) -> Machine {
    let mut code = Code::default();
    let control = match p.to_exp() {
        Some(e) => Control::Eval(code.add(&e)),
        None => Control::Done(Value::Unit),
    };
    Machine {
        code: Rc::new(code),
        st: State {
            threads: alloc::vec![Thread::new(0, control, Env::new())],
            cr_cnt: 0,
            funclosure: BTreeMap::new(),
            closures: Vec::new(),
            memory: Memory::new(),
            next_tid: 1,
        },
    }
}

fn as_int(v: &Value) -> Option<i64> {
    match v {
        Value::Int(n) => Some(*n),
        _ => None,
    }
}

fn arith(op: ArithOp, a: &Value, b: &Value) -> Result<Value, RuntimeErrorKind> {
    let (Some(x), Some(y)) = (as_int(a), as_int(b)) else {
        return Err(RuntimeErrorKind::NonIntArith(a.clone(), b.clone()));
    };
    Ok(match op {
        ArithOp::Add => Value::Int(x.wrapping_add(y)),
        ArithOp::Sub => Value::Int(x.wrapping_sub(y)),
        ArithOp::Mul => Value::Int(x.wrapping_mul(y)),
        ArithOp::Mod => {
            if y == 0 {
                return Err(RuntimeErrorKind::DivideByZero);
            }
            Value::Int(x.wrapping_rem_euclid(y))
        }
        ArithOp::Eq => Value::bool(x == y),
        ArithOp::Ne => Value::bool(x != y),
        ArithOp::Lt => Value::bool(x < y),
        ArithOp::Gt => Value::bool(x > y),
        ArithOp::Le => Value::bool(x <= y),
        ArithOp::Ge => Value::bool(x >= y),
    })
}

fn location(v: &Value) -> Result<(u64, u64), RuntimeErrorKind> {
    match v {
        Value::Location(a, i) => Ok((*a, *i)),
        other => Err(RuntimeErrorKind::NotALocation(other.clone())),
    }
}

fn non_negative(v: &Value) -> Result<u64, RuntimeErrorKind> {
    match v {
        Value::Int(n) if *n >= 0 => Ok(*n as u64),
        other => Err(RuntimeErrorKind::BadInt(other.clone())),
    }
}

impl Machine {
    pub fn code(&self) -> &Code {
        &self.code
    }

    pub fn memory(&self) -> &Memory {
        &self.st.memory
    }

    pub fn memory_mut(&mut self) -> &mut Memory {
        &mut self.st.memory
    }

    pub fn threads(&self) -> &[Thread] {
        &self.st.threads
    }

    /// Number of closures minted so far.
    pub fn cr_cnt(&self) -> u64 {
        self.st.cr_cnt
    }

    pub fn closures(&self) -> &[Closure] {
        &self.st.closures
    }

    pub fn runnable(&self) -> Vec<u32> {
        self.st.threads.iter().filter(|t| !t.is_done()).map(|t| t.tid).collect()
    }

    pub fn is_terminal(&self) -> bool {
        self.st.threads.iter().all(Thread::is_done)
    }

    /// Final values of terminated threads, by tid.
    pub fn results(&self) -> Vec<(u32, Value)> {
        self.st
            .threads
            .iter()
            .filter_map(|t| t.result().map(|v| (t.tid, v.clone())))
            .collect()
    }

    fn mint(&mut self, params: Vec<Sym>, body: ExpId, context: Env) -> u64 {
        let id = self.st.cr_cnt;
        self.st.cr_cnt += 1;
        self.st.closures.push(Closure { id, context, params, body });
        id
    }

    /// Applies one rewrite to thread `tid`.
    pub fn step(&mut self, tid: u32) -> Result<StepInfo, RuntimeError> {
        let idx = self
            .st
            .threads
            .iter()
            .position(|t| t.tid == tid && !t.is_done())
            .ok_or_else(|| RuntimeError::global(RuntimeErrorKind::BadTrace(tid)))?;
        let mut at: Option<ExpId> = None;
        self.step_inner(idx, &mut at).map_err(|kind| RuntimeError {
            kind,
            tid: Some(tid),
            pos: at.map(|e| self.code.pos(e)),
        })
    }

    fn step_inner(&mut self, idx: usize, at: &mut Option<ExpId>) -> Result<StepInfo, RuntimeErrorKind> {
        let code = Rc::clone(&self.code);
        let tid = self.st.threads[idx].tid;
        let control = core::mem::replace(&mut self.st.threads[idx].control, Control::Done(Value::Unit));
        let mut race = None;
        let ok = |rule| Ok(StepInfo { rule, race: None });

        macro_rules! th {
            () => {
                self.st.threads[idx]
            };
        }
        macro_rules! set {
            ($c:expr) => {
                th!().control = $c
            };
        }

        match control {
            Control::Done(v) => {
                set!(Control::Done(v));
                ok("done")
            }
            Control::Eval(e) => {
                *at = Some(e);
                match code.node(e) {
                    Node::Int(n) => {
                        set!(Control::Ret(Value::Int(*n)));
                        ok("int")
                    }
                    Node::Str(s) => {
                        set!(Control::Ret(Value::Str(s.clone())));
                        ok("string")
                    }
                    Node::Skip => {
                        set!(Control::Ret(Value::Unit));
                        ok("skip")
                    }
                    Node::Ident(x) => {
                        let v = match th!().env.get(x) {
                            Some(v) => v.clone(),
                            None => match self.st.funclosure.get(x) {
                                Some(c) => Value::ClosureRef(*c),
                                None => {
                                    return Err(RuntimeErrorKind::UnknownName(
                                        code.sym_name(*x).to_string(),
                                    ))
                                }
                            },
                        };
                        set!(Control::Ret(v));
                        ok("lookup")
                    }
                    Node::Fn { name, params, body } => {
                        let ctx = th!().env.clone();
                        let c = self.mint(params.clone(), *body, ctx);
                        if let Some(n) = name {
                            self.st.funclosure.insert(*n, c);
                        }
                        set!(Control::Ret(Value::ClosureRef(c)));
                        ok(if name.is_some() { "function-definition" } else { "anonymous-function" })
                    }
                    Node::Fork(body) => {
                        let child = self.st.next_tid;
                        self.st.next_tid += 1;
                        let env = th!().env.clone();
                        self.st.threads.push(Thread::new(child, Control::Eval(*body), env));
                        self.st.threads[idx].control = Control::Ret(Value::Unit);
                        ok("fork")
                    }
                    Node::TailCall(apply) => {
                        let first = code.operands(*apply)[0];
                        th!().k.push(Frame::Pending { node: *apply, vals: Vec::new(), tail: true });
                        set!(Control::Eval(first));
                        ok("tailcall")
                    }
                    _ => {
                        let first = code.operands(e)[0];
                        th!().k.push(Frame::Pending { node: e, vals: Vec::new(), tail: false });
                        set!(Control::Eval(first));
                        ok("focus")
                    }
                }
            }
            Control::Ret(v) => match th!().k.pop() {
                None => {
                    set!(Control::Done(v));
                    ok("terminate")
                }
                Some(Frame::Return) => {
                    let env = th!().clstack.pop().unwrap_or_default();
                    th!().env = env;
                    set!(Control::Ret(v));
                    ok("return")
                }
                Some(Frame::Pending { node, mut vals, tail }) => {
                    *at = Some(node);
                    vals.push(v);
                    let ops = code.operands(node);
                    if vals.len() < ops.len() {
                        let next = ops[vals.len()];
                        th!().k.push(Frame::Pending { node, vals, tail });
                        set!(Control::Eval(next));
                        return ok("operand");
                    }
                    self.fire(idx, tid, node, vals, tail, &mut race)
                        .map(|rule| StepInfo { rule, race })
                }
            },
            Control::Bind { body, mut params, mut args, pushed, caller } => {
                *at = Some(body);
                match (params.is_empty(), args.is_empty()) {
                    (false, false) => {
                        let p = params.remove(0);
                        let a = args.remove(0);
                        th!().env.insert(p, a);
                        set!(Control::Bind { body, params, args, pushed, caller });
                        ok("arg-binding")
                    }
                    (true, false) => Err(RuntimeErrorKind::TooManyArgs { extra: args.len() }),
                    (true, true) => {
                        if pushed {
                            th!().k.push(Frame::Return);
                        }
                        set!(Control::Eval(body));
                        ok("full-application")
                    }
                    (false, true) => {
                        let ctx = th!().env.clone();
                        let c = self.mint(params, body, ctx);
                        let env = if pushed { th!().clstack.pop() } else { caller };
                        th!().env = env.unwrap_or_default();
                        set!(Control::Ret(Value::ClosureRef(c)));
                        ok("partial-application")
                    }
                }
            }
            Control::ReadFinish(e, t) => {
                *at = Some(e);
                let v = self.st.memory.read_na_finish(&t)?;
                set!(Control::Ret(v));
                ok("read-na-finish")
            }
            Control::WriteFinish(e, t) => {
                *at = Some(e);
                self.st.memory.write_na_finish(&t)?;
                set!(Control::Ret(Value::Unit));
                ok("write-na-finish")
            }
            Control::AllocFinish { addr, size } => {
                let loc = self.st.memory.allocate_finish(tid, addr, size);
                set!(Control::Ret(loc));
                ok("allocate-finish")
            }
        }
    }

    fn fire(
        &mut self,
        idx: usize,
        tid: u32,
        node: ExpId,
        mut vals: Vec<Value>,
        tail: bool,
        race: &mut Option<RaceReport>,
    ) -> Result<&'static str, RuntimeErrorKind> {
        let code = Rc::clone(&self.code);
        let mem = &mut self.st.memory;
        let mut note = |a: Access<()>| *race = a.race;
        let (control, rule) = match code.node(node) {
            Node::Arith(op, ..) => (Control::Ret(arith(*op, &vals[0], &vals[1])?), "arith"),
            Node::Seq(_, rest) => (Control::Eval(*rest), "seq"),
            Node::Case(_, arms) => {
                let sel = as_int(&vals[0])
                    .and_then(|i| usize::try_from(i).ok())
                    .filter(|i| *i < arms.len())
                    .ok_or_else(|| RuntimeErrorKind::CaseOutOfRange {
                        value: vals[0].clone(),
                        arms: arms.len(),
                    })?;
                (Control::Eval(arms[sel]), "case")
            }
            Node::EnvAssign(x, _) => {
                let v = vals.pop().unwrap_or(Value::Unit);
                self.st.threads[idx].env.insert(*x, v);
                (Control::Ret(Value::Unit), "env-assign")
            }
            Node::Field(_, off) => {
                let (a, i) = location(&vals[0])?;
                (Control::Ret(Value::Location(a, i + off)), "field-offset")
            }
            Node::FieldDyn(..) => {
                let (a, i) = location(&vals[0])?;
                let off = non_negative(&vals[1])?;
                (Control::Ret(Value::Location(a, i + off)), "field-offset")
            }
            Node::Allocate(_) => {
                let size = non_negative(&vals[0])?;
                let addr = mem.allocate_begin(tid);
                (Control::AllocFinish { addr, size }, "allocate")
            }
            Node::Deref(Order::Na, _) => {
                let (a, i) = location(&vals[0])?;
                let acc = mem.read_na_begin(tid, a, i)?;
                *race = acc.race;
                (Control::ReadFinish(node, acc.value), "read-na")
            }
            Node::Deref(Order::At, _) => {
                let (a, i) = location(&vals[0])?;
                let acc = mem.read_at(tid, a, i)?;
                *race = acc.race;
                (Control::Ret(acc.value), "read-at")
            }
            Node::MemAssign(_, Order::Na, _) => {
                let (a, i) = location(&vals[0])?;
                let v = vals.pop().unwrap_or(Value::Unit);
                let acc = mem.write_na_begin(tid, a, i, v)?;
                *race = acc.race;
                (Control::WriteFinish(node, acc.value), "write-na")
            }
            Node::MemAssign(_, Order::At, _) => {
                let (a, i) = location(&vals[0])?;
                let v = vals.pop().unwrap_or(Value::Unit);
                note(mem.write_at(tid, a, i, v)?);
                (Control::Ret(Value::Unit), "write-at")
            }
            Node::Cas(..) => {
                let (a, i) = location(&vals[0])?;
                let acc = mem.cas(tid, a, i, &vals[1], vals[2].clone())?;
                *race = acc.race;
                (Control::Ret(acc.value), "cas")
            }
            Node::Append(..) => {
                let (a, _) = location(&vals[0])?;
                let acc = mem.append(tid, a, vals[1].clone())?;
                *race = acc.race;
                (Control::Ret(Value::Unit), "append")
            }
            Node::Free(_) => {
                let (a, _) = location(&vals[0])?;
                note(mem.free(tid, a)?);
                (Control::Ret(Value::Unit), "free")
            }
            Node::Apply(..) => {
                let callee = vals.pop().unwrap_or(Value::Unit);
                let Value::ClosureRef(c) = callee else {
                    return Err(RuntimeErrorKind::NotAClosure(callee));
                };
                let cl = self.st.closures[c as usize].clone();
                let th = &mut self.st.threads[idx];
                let caller = if tail {
                    Some(core::mem::replace(&mut th.env, cl.context))
                } else {
                    let old = core::mem::replace(&mut th.env, cl.context);
                    th.clstack.push(old);
                    None
                };
                let bind =
                    Control::Bind { body: cl.body, params: cl.params, args: vals, pushed: !tail, caller };
                (bind, if tail { "tail-call" } else { "function-call" })
            }
            other => unreachable!("no operands to fire for {other:?}"),
        };
        self.st.threads[idx].control = control;
        Ok(rule)
    }
}

/// Thread selection policy for [`run`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Schedule {
    RoundRobin,
    Random(u64),
    /// Thread ids to step, in order; round-robin once exhausted.
    Trace(Vec<u32>),
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub schedule: Schedule,
    pub max_steps: u64,
    /// Stop at the first race with a `Race` error.
    pub strict_races: bool,
    pub strict_uninit: bool,
    /// Record one `tid step rule` line per step.
    pub trace: bool,
}

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            schedule: Schedule::RoundRobin,
            max_steps: DEFAULT_MAX_STEPS,
            strict_races: false,
            strict_uninit: false,
            trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FinalConfig {
    /// Final value of every thread, by tid.
    pub results: Vec<(u32, Value)>,
    pub memory: Memory,
    pub races: Vec<RaceReport>,
    pub steps: u64,
    /// Deepest call stack seen on any thread.
    pub max_clstack: usize,
    pub cr_cnt: u64,
    pub trace: Vec<String>,
}

impl FinalConfig {
    /// Thread 0's value, the program result.
    pub fn result(&self) -> &Value {
        self.results
            .iter()
            .find(|(t, _)| *t == 0)
            .map(|(_, v)| v)
            .unwrap_or(&Value::Unit)
    }

    pub fn dump(&self) -> String {
        self.memory.dump()
    }
}

/// A failed run, with what had been collected up to the failure.
#[derive(Clone, Debug)]
pub struct RunFailure {
    pub error: RuntimeError,
    pub partial: Box<FinalConfig>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

/// Runs `m` to termination under `opts.schedule`.
pub fn run(mut m: Machine, opts: &RunOptions) -> Result<FinalConfig, RunFailure> {
    m.st.memory.set_strict_uninit(opts.strict_uninit);
    let mut rng = match opts.schedule {
        Schedule::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut fixed = match &opts.schedule {
        Schedule::Trace(t) => t.clone(),
        _ => Vec::new(),
    };
    fixed.reverse();
    let mut cfg = FinalConfig {
        results: Vec::new(),
        memory: Memory::new(),
        races: Vec::new(),
        steps: 0,
        max_clstack: 0,
        cr_cnt: 0,
        trace: Vec::new(),
    };
    let mut cursor = 0usize;
    let fail = |error: RuntimeError, mut cfg: FinalConfig, m: &Machine| {
        cfg.results = m.results();
        cfg.memory = m.st.memory.clone();
        cfg.cr_cnt = m.st.cr_cnt;
        Err(RunFailure { error, partial: Box::new(cfg) })
    };
    loop {
        let runnable = m.runnable();
        if runnable.is_empty() {
            break;
        }
        if cfg.steps >= opts.max_steps {
            let e = RuntimeError::global(RuntimeErrorKind::StepBudgetExceeded(opts.max_steps));
            return fail(e, cfg, &m);
        }
        let tid = if let Some(t) = fixed.pop() {
            t
        } else if let Some(r) = rng.as_mut() {
            runnable[(r.next_u64() % runnable.len() as u64) as usize]
        } else {
            let n = m.st.threads.len();
            let pick = (0..n)
                .map(|k| (cursor + k) % n)
                .find(|i| !m.st.threads[*i].is_done())
                .unwrap_or(0);
            cursor = pick + 1;
            m.st.threads[pick].tid
        };
        let info = match m.step(tid) {
            Ok(i) => i,
            Err(e) => return fail(e, cfg, &m),
        };
        if opts.trace {
            cfg.trace.push(format!("{tid} {} {}", cfg.steps, info.rule));
        }
        cfg.steps += 1;
        let depth = m.st.threads.iter().map(|t| t.clstack.len()).max().unwrap_or(0);
        cfg.max_clstack = cfg.max_clstack.max(depth);
        if let Some(r) = info.race {
            cfg.races.push(r.clone());
            if opts.strict_races {
                let e = RuntimeError {
                    kind: RuntimeErrorKind::Race(r),
                    tid: Some(tid),
                    pos: None,
                };
                return fail(e, cfg, &m);
            }
        }
    }
    cfg.results = m.results();
    cfg.cr_cnt = m.st.cr_cnt;
    cfg.memory = m.st.memory;
    Ok(cfg)
}

/// How a schedule ended.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Finished(Vec<(u32, Value)>),
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Terminal {
    pub outcome: Outcome,
    pub memory: Memory,
}

#[derive(Clone, Debug, Default)]
pub struct SearchResult {
    pub terminals: BTreeSet<Terminal>,
    pub raced: bool,
    pub races: BTreeSet<RaceReport>,
    /// Distinct machine states visited.
    pub states: usize,
}

/// Explores every schedule of `m` depth-first, merging identical states.
pub fn enumerate_interleavings(m: &Machine, max_steps: u64) -> Result<SearchResult, RuntimeError> {
    let mut res = SearchResult::default();
    let mut visited: BTreeSet<State> = BTreeSet::new();
    let mut stack: Vec<(Machine, u64)> = alloc::vec![(m.clone(), 0)];
    visited.insert(m.st.clone());
    while let Some((cur, depth)) = stack.pop() {
        let runnable = cur.runnable();
        if runnable.is_empty() {
            res.terminals.insert(Terminal {
                outcome: Outcome::Finished(cur.results()),
                memory: cur.st.memory.clone(),
            });
            continue;
        }
        if depth >= max_steps {
            return Err(RuntimeError::global(RuntimeErrorKind::BoundExceeded(max_steps)));
        }
        for tid in runnable {
            let mut next = cur.clone();
            match next.step(tid) {
                Ok(info) => {
                    if let Some(r) = info.race {
                        res.raced = true;
                        res.races.insert(r);
                    }
                    if visited.insert(next.st.clone()) {
                        stack.push((next, depth + 1));
                    }
                }
                Err(e) => {
                    res.terminals.insert(Terminal {
                        outcome: Outcome::Failed(e.to_string()),
                        memory: next.st.memory.clone(),
                    });
                }
            }
        }
    }
    res.states = visited.len();
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_core;

    fn eval(src: &str) -> FinalConfig {
        run(load(&parse_core(src).unwrap()), &RunOptions::default()).unwrap()
    }

    #[test]
    fn literals_and_identity() {
        assert_eq!(eval("7").result(), &Value::Int(7));
        assert_eq!(eval("").result(), &Value::Unit);
        assert_eq!(eval("(fn (x){x})(42)").result(), &Value::Int(42));
    }

    #[test]
    fn case_is_zero_indexed() {
        assert_eq!(eval("case 1 of {10, 20}").result(), &Value::Int(20));
    }

    #[test]
    fn partial_application() {
        let c = eval("fn add (x,y){x + y}; add(1)(2)");
        assert_eq!(c.result(), &Value::Int(3));
        assert_eq!(c.cr_cnt, 2);
    }

    #[test]
    fn fork_skip() {
        let c = eval("fork{clskip}");
        assert_eq!(c.results, alloc::vec![(0, Value::Unit), (1, Value::Unit)]);
    }

    #[test]
    fn static_scoping() {
        let c = eval("let y = 1 in let f = fn (x){ x + y } in let y = 100 in f(0)");
        assert_eq!(c.result(), &Value::Int(1));
    }

    #[test]
    fn tail_recursion_is_flat() {
        let c = eval("fn loop (n){ case n > 0 of {0, tailcall(loop(n - 1))} }; loop(10000)");
        assert_eq!(c.result(), &Value::Int(0));
        assert_eq!(c.max_clstack, 1);
    }

    #[test]
    fn too_many_args() {
        let err = run(load(&parse_core("(fn (x){x})(1, 2)").unwrap()), &RunOptions::default())
            .unwrap_err();
        assert!(matches!(err.error.kind, RuntimeErrorKind::TooManyArgs { extra: 1 }));
    }

    #[test]
    fn unknown_name_has_position() {
        let err = run(load(&parse_core("1;\n  zz").unwrap()), &RunOptions::default()).unwrap_err();
        assert!(matches!(err.error.kind, RuntimeErrorKind::UnknownName(ref n) if n == "zz"));
        assert_eq!(err.error.pos, Some(Pos { line: 2, col: 3 }));
    }

    #[test]
    fn racing_writes_search() {
        let src = "(fn (x){ fork{ x :=na 1 }; x :=na 2 })(allocate(1))";
        let res = enumerate_interleavings(&load(&parse_core(src).unwrap()), 1000).unwrap();
        assert!(res.raced);
        let cells: BTreeSet<_> =
            res.terminals.iter().map(|t| t.memory.peek(0, 0).cloned()).collect();
        assert_eq!(cells.len(), 2);
        let src = "(fn (x){ fork{ x :=at 1 }; x :=at 2 })(allocate(1))";
        let res = enumerate_interleavings(&load(&parse_core(src).unwrap()), 1000).unwrap();
        assert!(!res.raced);
    }
}
