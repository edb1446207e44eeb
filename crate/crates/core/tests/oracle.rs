//! Library estimators against full-loop reference sums.

mod common;

use common::oracle_mismatches;

#[test]
fn small_instances_match_reference() {
    let mut failures = Vec::new();
    for seed in 0..40u64 {
        let n = 30 + (seed as usize * 37) % 171;
        failures.extend(oracle_mismatches(n, seed).into_iter().map(|m| format!("seed {seed}, n {n}: {m}")));
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
