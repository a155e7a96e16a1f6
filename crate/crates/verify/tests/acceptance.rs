//! Runs every numbered reproduction check, prints one line per check and
//! exits nonzero when any of them fails.

use std::process::ExitCode;

use ipop_verify::{run_criterion, CRITERIA};

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for (id, _) in CRITERIA {
        let r = run_criterion(id).expect("known criterion");
        println!("{}", r.outcome.line());
        if !r.outcome.passed {
            failed.push(id);
        }
    }
    println!("{}/{} criteria pass", CRITERIA.len() - failed.len(), CRITERIA.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
