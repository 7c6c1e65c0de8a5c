//! Runs the twelve acceptance criteria and prints one line per criterion.

use bidomain::verify::{run_criterion, VerifyOptions, NUM_CRITERIA};

fn main() {
    let opts = VerifyOptions::default();
    let mut failed = Vec::new();
    for id in 1..=NUM_CRITERIA {
        let report = run_criterion(id, &opts);
        println!("{report}");
        if !report.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {NUM_CRITERIA} criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
