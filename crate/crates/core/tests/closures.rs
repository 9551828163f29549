mod support;

use support::closures::{countdown, partial_matches_direct};

#[test]
fn every_partial_split() {
    for n in 1..=4 {
        for k in 0..n {
            partial_matches_direct(n, k).unwrap();
        }
    }
}

#[test]
fn tail_countdown_is_flat() {
    countdown(10_000, 0).unwrap();
    countdown(10_000, 3).unwrap();
}
