//! File handling and command implementations behind the `krust` binary.
//!
//! Sources ending in `.krs` are surface programs; anything ending in `.kcl`
//! is core. Every command writes its normal output to a `Write` so the
//! binary and the tests share one code path.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use krust_core::machine::{Outcome, RuntimeErrorKind, DEFAULT_MAX_STEPS};
use krust_core::syntax::{CoreProgram, SurfaceProgram};
use krust_core::{
    check_program, enumerate_interleavings, load, lower_program, parse_core, parse_surface,
    pretty_core, run, LowerError, RunOptions, Schedule, TypeError,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_TYPE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_RACE: u8 = 3;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_PARSE: u8 = 65;

/// Default bound for exhaustive search.
pub const DEFAULT_SEARCH_STEPS: u64 = 100_000;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Parse { path: PathBuf, message: String },
    Type { path: PathBuf, errors: Vec<TypeError> },
    Lower { path: PathBuf, error: LowerError },
    Runtime(String),
    Race(String),
    Io(std::io::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Io(_) => EXIT_USAGE,
            Failure::Parse { .. } => EXIT_PARSE,
            Failure::Type { .. } | Failure::Lower { .. } => EXIT_TYPE,
            Failure::Runtime(_) => EXIT_RUNTIME,
            Failure::Race(_) => EXIT_RACE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "error: {m}"),
            Failure::Parse { path, message } => write!(f, "{}: parse error at {message}", path.display()),
            Failure::Type { path, errors } => {
                for (i, e) in errors.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "{}: {e}", path.display())?;
                }
                Ok(())
            }
            Failure::Lower { path, error } => write!(f, "{}: {error}", path.display()),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
            Failure::Race(m) => write!(f, "data race: {m}"),
            Failure::Io(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lang {
    Surface,
    Core,
}

pub fn lang_of(path: &Path) -> Result<Lang, Failure> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("krs") => Ok(Lang::Surface),
        Some("kcl") => Ok(Lang::Core),
        _ => Err(Failure::Usage(format!(
            "{}: expected a .krs or .kcl file",
            path.display()
        ))),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn read_surface(path: &Path) -> Result<SurfaceProgram, Failure> {
    let src = read(path)?;
    parse_surface(&src).map_err(|e| Failure::Parse { path: path.into(), message: e.to_string() })
}

/// Parses, checks and lowers a surface file.
pub fn compile(path: &Path) -> Result<CoreProgram, Failure> {
    let p = read_surface(path)?;
    check_program(&p).map_err(|errors| Failure::Type { path: path.into(), errors })?;
    lower_program(&p).map_err(|error| Failure::Lower { path: path.into(), error })
}

/// The core program for `path`, compiling surface sources first.
pub fn core_program(path: &Path) -> Result<CoreProgram, Failure> {
    match lang_of(path)? {
        Lang::Surface => compile(path),
        Lang::Core => {
            let src = read(path)?;
            parse_core(&src).map_err(|e| Failure::Parse { path: path.into(), message: e.to_string() })
        }
    }
}

pub fn check(path: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    match lang_of(path)? {
        Lang::Surface => {
            let p = read_surface(path)?;
            let cp = check_program(&p).map_err(|errors| Failure::Type { path: path.into(), errors })?;
            writeln!(
                out,
                "ok: {} declarations, {} functions, {} bindings",
                p.decls.len(),
                p.fns.len(),
                cp.bindings.len()
            )?;
        }
        Lang::Core => {
            let p = core_program(path)?;
            writeln!(out, "ok: {} items", p.items.len())?;
        }
    }
    Ok(())
}

/// Lowers `path` and writes core text to `output`, or to `out` if none.
pub fn lower(path: &Path, output: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    let p = match lang_of(path)? {
        Lang::Surface => compile(path)?,
        Lang::Core => return Err(Failure::Usage(format!("{} is already core", path.display()))),
    };
    let text = pretty_core(&p);
    match output {
        Some(o) => std::fs::write(o, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Thread choice for `run`, as given on the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sched {
    RoundRobin,
    Random,
    Trace(PathBuf),
}

impl std::str::FromStr for Sched {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "round-robin" => Ok(Sched::RoundRobin),
            "random" => Ok(Sched::Random),
            _ => match s.strip_prefix("trace:") {
                Some(p) if !p.is_empty() => Ok(Sched::Trace(p.into())),
                _ => Err(format!("unknown scheduler `{s}`; use round-robin, random or trace:FILE")),
            },
        }
    }
}

/// Thread ids from a trace: the first field of every `tid step rule` line.
pub fn parse_trace(text: &str) -> Result<Vec<u32>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut fields = l.split_whitespace();
            let tid = fields.next().and_then(|t| t.parse().ok());
            let step = fields.next().and_then(|t| t.parse::<u64>().ok());
            match (tid, step, fields.next()) {
                (Some(t), Some(_), Some(_)) => Ok(t),
                _ => Err(format!("line {}: expected `tid step rule`", i + 1)),
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub sched: Sched,
    pub seed: u64,
    pub max_steps: u64,
    pub dump_memory: bool,
    pub trace: bool,
    pub strict_races: bool,
    pub strict_uninit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sched: Sched::RoundRobin,
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            dump_memory: false,
            trace: false,
            strict_races: false,
            strict_uninit: false,
        }
    }
}

/// Runs `path`. The result and optional dump go to `out`; the step trace
/// and race warnings go to `diag`.
pub fn run_file(
    path: &Path,
    cfg: &RunConfig,
    out: &mut dyn Write,
    diag: &mut dyn Write,
) -> Result<(), Failure> {
    let p = core_program(path)?;
    let schedule = match &cfg.sched {
        Sched::RoundRobin => Schedule::RoundRobin,
        Sched::Random => Schedule::Random(cfg.seed),
        Sched::Trace(f) => {
            let text = read(f)?;
            Schedule::Trace(parse_trace(&text).map_err(|e| Failure::Usage(format!("{}: {e}", f.display())))?)
        }
    };
    let opts = RunOptions {
        schedule,
        max_steps: cfg.max_steps,
        strict_races: cfg.strict_races,
        strict_uninit: cfg.strict_uninit,
        trace: cfg.trace,
    };
    let res = run(load(&p), &opts);
    let partial = match &res {
        Ok(fc) => fc,
        Err(f) => &*f.partial,
    };
    for line in &partial.trace {
        writeln!(diag, "{line}")?;
    }
    match res {
        Ok(fc) => {
            for r in &fc.races {
                writeln!(diag, "warning: {r}")?;
            }
            writeln!(out, "result: {}", fc.result())?;
            if cfg.dump_memory {
                out.write_all(fc.dump().as_bytes())?;
            }
            Ok(())
        }
        Err(f) => match f.error.kind {
            RuntimeErrorKind::Race(r) => Err(Failure::Race(r.to_string())),
            _ => Err(Failure::Runtime(f.error.to_string())),
        },
    }
}

/// Explores every schedule of `path`, printing each distinct terminal
/// configuration and whether any schedule raced. A race is reported as
/// `Failure::Race` after the terminals have been written.
pub fn search(path: &Path, max_steps: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let p = core_program(path)?;
    let res = enumerate_interleavings(&load(&p), max_steps).map_err(|e| Failure::Runtime(e.to_string()))?;
    for (i, t) in res.terminals.iter().enumerate() {
        match &t.outcome {
            Outcome::Finished(results) => {
                let rs: Vec<String> = results.iter().map(|(tid, v)| format!("{tid}={}", v)).collect();
                writeln!(out, "terminal {i}: results {}", rs.join(" "))?;
            }
            Outcome::Failed(m) => writeln!(out, "terminal {i}: failed: {m}")?,
        }
        out.write_all(t.memory.dump().as_bytes())?;
    }
    for r in &res.races {
        writeln!(out, "{r}")?;
    }
    writeln!(out, "states: {}", res.states)?;
    writeln!(out, "raced: {}", if res.raced { "yes" } else { "no" })?;
    if res.raced {
        return Err(Failure::Race(format!("{} distinct races", res.races.len())));
    }
    Ok(())
}
