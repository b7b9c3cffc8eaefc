//! Detector statistics against dense brute-force constructions.

mod common;

#[test]
fn statistics_match_dense_forms() {
    let (unaware, aware) = common::dense::worst_disagreement(20);
    assert!(unaware <= 1e-9, "clutter-unaware relative error {unaware:e}");
    assert!(aware <= 1e-9, "clutter-aware relative error {aware:e}");
}
