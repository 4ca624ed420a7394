//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.
//!
//! `cargo test -p aes-harness --test acceptance -- 7 8` runs a subset.

use std::process::ExitCode;

use aes_harness::verify::{run_criterion, CRITERIA};

fn main() -> ExitCode {
    let selected: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, _) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let result = run_criterion(id).expect("criterion id is listed");
        println!("{result}");
        ran += 1;
        if !result.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
