//! Acceptance criteria 1 to 10 at their stated tolerances.

use std::thread;

use kahler_lab::acceptance::{determinism, run_one, Artifact, Criterion, Report};

const SEED: u64 = 7;

fn all_primary() -> Report {
    let parts: Vec<Report> = thread::scope(|s| {
        let handles: Vec<_> = (1..=9u8).map(|id| s.spawn(move || run_one(id, SEED))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut report = Report::default();
    for p in parts {
        kahler_lab::acceptance::merge(&mut report, p);
    }
    report
}

fn line(c: &Criterion) -> String {
    format!("criterion {:>2} {} {}: {}", c.id, if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail)
}

#[test]
fn acceptance_criteria() {
    let first = all_primary();
    let second: Vec<Artifact> = all_primary().artifacts;
    let mut criteria = first.criteria.clone();
    criteria.push(determinism(&first.artifacts, &second));
    for c in &criteria {
        println!("{}", line(c));
    }
    assert_eq!(criteria.len(), 10);
    let failed: Vec<String> = criteria.iter().filter(|c| !c.pass).map(line).collect();
    assert!(failed.is_empty(), "failed:\n{}", failed.join("\n"));
}
