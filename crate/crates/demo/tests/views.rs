use semirandom_dl_demo::{anticoncentration_view, column_test_view, tail_view};

#[test]
fn true_column_accepted_midpoint_rejected() {
    let col = column_test_view(16, 2, 4000, 1, 0.0, 0.05, 0.01, 0.02, true).unwrap();
    assert!(col.outcome.accepted);
    assert_eq!(col.counts.iter().sum::<usize>(), 4000);
    let mid = column_test_view(16, 2, 4000, 1, 1.0, 0.05, 0.01, 0.02, true).unwrap();
    assert!(!mid.outcome.accepted);
    assert!((mid.overlaps.0 - mid.overlaps.1).abs() < 1e-12);
}

#[test]
fn anticoncentration_counts_patterns() {
    let r = anticoncentration_view(10, 1.0, 0.05, 0.25).unwrap();
    assert_eq!(r.evaluations, 1 << 10);
    assert!(anticoncentration_view(0, 1.0, 0.05, 0.25).is_err());
}

#[test]
fn tail_view_runs_and_rejects_bad_family() {
    let v = tail_view("all-ones", 2, 40, 4, 0.1, 200, 3).unwrap();
    assert_eq!(v.report.trials, 200);
    assert!(tail_view("cube", 2, 40, 4, 0.1, 200, 3).is_err());
}
