//! Every metric against its brute-force reference on randomized fixtures.

mod support;

use std::time::Instant;

use support::ORACLE_CHECKS;

const FIXTURES: usize = 25;

#[test]
fn every_metric_matches_its_reference() {
    let started = Instant::now();
    for (i, (name, check)) in ORACLE_CHECKS.iter().enumerate() {
        let n = check(1000 + i as u64, FIXTURES).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(n, FIXTURES);
    }
    assert!(started.elapsed().as_secs_f64() < 10.0, "oracle suite took {:?}", started.elapsed());
}

#[test]
fn references_hold_on_other_seeds() {
    for seed in [7u64, 8, 9] {
        for (name, check) in ORACLE_CHECKS {
            check(seed, 5).unwrap_or_else(|e| panic!("{name} (seed {seed}): {e}"));
        }
    }
}
