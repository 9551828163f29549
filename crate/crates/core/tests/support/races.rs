//! Two-thread programs over one shared cell, checked against a brute-force
//! interleaving of their memory micro-steps.

#![allow(dead_code)]

use krust_core::{enumerate_interleavings, load, parse_core};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Acc {
    NaRead,
    NaWrite,
    AtRead,
    AtWrite,
    Cas,
}

pub const ALL: [Acc; 5] = [Acc::NaRead, Acc::NaWrite, Acc::AtRead, Acc::AtWrite, Acc::Cas];

impl Acc {
    fn text(self) -> &'static str {
        match self {
            Acc::NaRead => "*na x",
            Acc::NaWrite => "x :=na 1",
            Acc::AtRead => "*at x",
            Acc::AtWrite => "x :=at 2",
            Acc::Cas => "cas(x, 0, 3)",
        }
    }

    fn write(self) -> bool {
        matches!(self, Acc::NaWrite | Acc::AtWrite | Acc::Cas)
    }

    fn atomic(self) -> bool {
        matches!(self, Acc::AtRead | Acc::AtWrite | Acc::Cas)
    }
}

fn seq(xs: &[Acc]) -> String {
    if xs.is_empty() {
        return "clskip".into();
    }
    xs.iter().map(|a| a.text()).collect::<Vec<_>>().join("; ")
}

/// Thread 1 is forked with `child`; thread 0 continues with `parent`.
pub fn program(child: &[Acc], parent: &[Acc]) -> String {
    format!("(fn (x){{ fork{{{}}}; {} }})(allocate(1))", seq(child), seq(parent))
}

#[derive(Clone, Copy)]
enum Ev {
    Begin(Acc),
    End,
    Atomic(Acc),
}

fn events(xs: &[Acc]) -> Vec<Ev> {
    let mut out = Vec::new();
    for a in xs {
        if a.atomic() {
            out.push(Ev::Atomic(*a));
        } else {
            out.push(Ev::Begin(*a));
            out.push(Ev::End);
        }
    }
    out
}

fn search(ts: &[Vec<Ev>; 2], pos: [usize; 2], inflight: [Option<Acc>; 2]) -> bool {
    for t in 0..2 {
        let Some(ev) = ts[t].get(pos[t]) else { continue };
        let other = inflight[1 - t];
        let mut next_inflight = inflight;
        match *ev {
            Ev::Begin(a) | Ev::Atomic(a) => {
                if let Some(o) = other {
                    if a.write() || o.write() {
                        return true;
                    }
                }
                if let Ev::Begin(_) = ev {
                    next_inflight[t] = Some(a);
                }
            }
            Ev::End => next_inflight[t] = None,
        }
        let mut next = pos;
        next[t] += 1;
        if search(ts, next, next_inflight) {
            return true;
        }
    }
    false
}

/// Does some interleaving overlap two conflicting accesses?
pub fn oracle(child: &[Acc], parent: &[Acc]) -> bool {
    search(&[events(child), events(parent)], [0, 0], [None, None])
}

pub fn machine(child: &[Acc], parent: &[Acc]) -> Result<bool, String> {
    let src = program(child, parent);
    let p = parse_core(&src).map_err(|e| format!("{e}\n{src}"))?;
    let res = enumerate_interleavings(&load(&p), 10_000).map_err(|e| format!("{e}\n{src}"))?;
    Ok(res.raced)
}

fn sequences(len: usize) -> Vec<Vec<Acc>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                ALL.iter().map(move |a| {
                    let mut s = s.clone();
                    s.push(*a);
                    s
                })
            })
            .collect();
    }
    out
}

/// Every pair with at most two accesses per thread, plus an evenly spaced
/// sample of the three-access pairs.
pub fn cases(sample: usize) -> Vec<(Vec<Acc>, Vec<Acc>)> {
    let short: Vec<Vec<Acc>> = (0..=2).flat_map(sequences).collect();
    let mut out = Vec::new();
    for a in &short {
        for b in &short {
            out.push((a.clone(), b.clone()));
        }
    }
    let three = sequences(3);
    let total = three.len() * three.len();
    let stride = (total / sample.max(1)).max(1);
    for i in (0..total).step_by(stride).take(sample) {
        // spread the sample over both coordinates
        let j = (i * 7919) % total;
        out.push((three[j / three.len()].clone(), three[j % three.len()].clone()));
    }
    out
}

/// Runs every case; returns (cases, racy cases) or the first disagreement.
pub fn agreement(sample: usize) -> Result<(usize, usize), String> {
    let cs = cases(sample);
    let mut racy = 0;
    for (a, b) in &cs {
        let want = oracle(a, b);
        let got = machine(a, b)?;
        if got != want {
            return Err(format!("machine {got}, oracle {want} for {}", program(a, b)));
        }
        racy += usize::from(want);
    }
    Ok((cs.len(), racy))
}
