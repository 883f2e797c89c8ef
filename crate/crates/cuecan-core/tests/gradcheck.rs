//! Contract-depth run of the finite-difference gradient suite: every op and
//! a full CueCAn unit, 20 trials each, worst relative error under 1e-4.

use cuecan_core::check::{run_gradient_suite, FD_TOL};

#[test]
fn gradient_suite_full_depth() {
    let report = run_gradient_suite(7, 20).expect("suite runs");
    for line in report.lines() {
        println!("{line}");
    }
    assert!(report.pass(), "gradient suite has failures");
    for case in &report.cases {
        assert!(case.trials >= 20);
        assert!(case.worst < FD_TOL, "{}: {}", case.name, case.worst);
    }
    let names: Vec<_> = report.cases.iter().map(|c| c.name).collect();
    assert!(names.contains(&"cuecan_unit"));
    assert!(names.contains(&"conv2d_masked"));
}
