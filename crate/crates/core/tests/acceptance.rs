//! Acceptance gate: runs every criterion, prints one PASS/FAIL line each
//! followed by its checks, and exits non-zero if any criterion fails.
//!
//! Positional arguments select criteria by number (`cargo test --test
//! acceptance -- 4 5`); harness flags such as `--nocapture` are ignored.

use std::process::ExitCode;

use tumor_branching::acceptance::CRITERIA;

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.trim_start_matches("criterion_").parse().ok())
        .collect();
    let ids: Vec<usize> = if selected.is_empty() {
        (1..=CRITERIA.len()).collect()
    } else {
        selected
    };
    let mut reports = Vec::new();
    for &id in &ids {
        let Some(f) = id.checked_sub(1).and_then(|i| CRITERIA.get(i)) else {
            eprintln!("no criterion {id}");
            return ExitCode::FAILURE;
        };
        let r = f();
        println!("{}", r.summary_line());
        reports.push(r);
    }
    println!();
    for r in &reports {
        print!("{r}");
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        println!("acceptance: {} of {} criteria passed", reports.len(), reports.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
