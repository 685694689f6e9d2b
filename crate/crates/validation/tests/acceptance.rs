//! Runs every acceptance criterion and prints one status line per criterion.

use std::process::ExitCode;

use aqc_tsp_validation::{
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8,
    CriterionReport, Outcome, RunLog,
};

fn main() -> ExitCode {
    let mut log = RunLog::default();
    let results: Vec<(u8, Outcome<CriterionReport>)> = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3(&mut log)),
        (4, criterion_4(&mut log)),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8(&mut log)),
    ];
    let mut failed = Vec::new();
    println!("acceptance criteria");
    for (id, result) in &results {
        match result {
            Ok(report) => {
                print!("{report}");
                if !report.passed() {
                    failed.push(*id);
                }
            }
            Err(e) => {
                println!("criterion {id}: FAIL (error: {e})");
                failed.push(*id);
            }
        }
    }
    println!(
        "summary: {} of {} criteria passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
