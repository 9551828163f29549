//! Partial application against direct application, and the flat tail loop.

#![allow(dead_code)]

use krust_core::{load, parse_core, run, RunOptions, Value};

fn eval(src: &str) -> Result<krust_core::FinalConfig, String> {
    let p = parse_core(src).map_err(|e| format!("{e}\n{src}"))?;
    let opts = RunOptions { trace: true, ..RunOptions::default() };
    run(load(&p), &opts).map_err(|e| format!("{e}\n{src}"))
}

fn closure_events(trace: &[String]) -> u64 {
    trace
        .iter()
        .filter(|l| {
            let rule = l.rsplit(' ').next().unwrap_or("");
            matches!(rule, "function-definition" | "anonymous-function" | "partial-application")
        })
        .count() as u64
}

/// `f` of arity `n` applied to `k` arguments, then to the rest, compared
/// with a single call on all `n` and with the value computed directly.
pub fn partial_matches_direct(n: usize, k: usize) -> Result<(), String> {
    let params: Vec<String> = (1..=n).map(|i| format!("p{i}")).collect();
    let args: Vec<i64> = (0..n as i64).map(|i| i + 2).collect();
    let body = params
        .iter()
        .enumerate()
        .map(|(i, p)| format!("{p} * {}", 10i64.pow(i as u32)))
        .collect::<Vec<_>>()
        .join(" + ");
    let expected: i64 = args.iter().enumerate().map(|(i, a)| a * 10i64.pow(i as u32)).sum();
    let list = |xs: &[i64]| xs.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ");
    let def = format!("fn f ({}){{{body}}}", params.join(", "));
    let direct = eval(&format!("{def}; f({})", list(&args)))?;
    let staged = eval(&format!(
        "{def}; (fn (g){{g({})}})(f({}))",
        list(&args[k..]),
        list(&args[..k])
    ))?;
    for (what, cfg, closures) in [("direct", &direct, 1), ("staged", &staged, 3)] {
        if cfg.result() != &Value::Int(expected) {
            return Err(format!("n={n} k={k}: {what} gave {} instead of {expected}", cfg.result()));
        }
        if cfg.cr_cnt != closures || closure_events(&cfg.trace) != cfg.cr_cnt {
            return Err(format!(
                "n={n} k={k}: {what} crCnt {} with {} closure events, expected {closures}",
                cfg.cr_cnt,
                closure_events(&cfg.trace)
            ));
        }
    }
    Ok(())
}

/// Counts down from `n` by tail recursion entered under `wrap` nested
/// calls; the call stack must never grow past the entry depth.
pub fn countdown(n: u64, wrap: usize) -> Result<(), String> {
    let mut call = format!("loop({n})");
    for i in 0..wrap {
        call = format!("(fn (w{i}){{{call}}})(0)");
    }
    let src = format!("fn loop (n){{ case n > 0 of {{0, tailcall(loop(n - 1))}} }}; {call}");
    let p = parse_core(&src).map_err(|e| e.to_string())?;
    let cfg = run(load(&p), &RunOptions::default()).map_err(|e| e.to_string())?;
    let entry = wrap + 1;
    if cfg.result() != &Value::Int(0) {
        return Err(format!("countdown returned {}", cfg.result()));
    }
    if cfg.max_clstack > entry {
        return Err(format!("clstack reached {} with entry depth {entry}", cfg.max_clstack));
    }
    Ok(())
}
