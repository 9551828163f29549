//! Core of the krust-lite toolchain.
//!
//! A surface language with ownership modifiers is parsed ([`syntax`]),
//! checked by an ownership/borrow/lifetime type system ([`check`]), lowered
//! to a small functional core language ([`lower`]), and executed on a
//! small-step abstract machine ([`machine`]) whose heap is a block memory
//! with reader/writer accounting for data-race detection ([`memory`]).
//!
//! The crate is `no_std` and only needs `alloc`; file IO and the command
//! line live in the `krust` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod check;
pub mod lower;
pub mod machine;
pub mod memory;
pub mod syntax;
pub mod types;

pub use check::{check_program, CheckedProgram, TypeError, TypeErrorKind};
pub use lower::{lower_program, LowerError};
pub use machine::{
    enumerate_interleavings, load, run, FinalConfig, Machine, RunFailure, RunOptions, RuntimeError,
    Schedule, SearchResult,
};
pub use memory::{Memory, MemError, RaceReport, Value};
pub use syntax::{parse_core, parse_surface, pretty_core, pretty_surface, ParseError, Pos};
pub use types::{CompoundRegistry, Lifetime, Mutability, RType};
