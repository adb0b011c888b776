//! Each directory under fixtures/faults swaps some case-study replies for
//! broken ones.

mod support;

use support::{check_fault, fault_dirs};

#[test]
fn every_seeded_fault_is_flagged() {
    let dirs = fault_dirs();
    assert!(dirs.len() >= 12, "only {} fault fixtures", dirs.len());
    let runs = tempfile::tempdir().unwrap();
    let failures: Vec<String> = dirs
        .iter()
        .filter_map(|d| check_fault(d, runs.path()).err())
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}
