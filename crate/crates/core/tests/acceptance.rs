//! Runs every acceptance criterion in sequence and prints one PASS/FAIL line
//! per criterion followed by its individual checks. Exits nonzero if any
//! criterion fails. Pass a substring argument to run a subset.

use std::process::ExitCode;

use pdmp_core::verify::{criteria, CriterionOutcome};

fn report(o: &CriterionOutcome) {
    let verdict = if o.passed() { "PASS" } else { "FAIL" };
    println!("{verdict} [{}] {} ({:.1}s, budget {:.0}s)", o.id, o.title, o.seconds, o.budget_seconds);
    for c in &o.checks {
        let mark = if c.passed { "ok " } else { "BAD" };
        println!("    {mark} {}: {:.4e} {} {:.4e}", c.name, c.value, c.relation, c.threshold);
    }
    if let Some(e) = &o.error {
        println!("    error: {e}");
    }
}

fn main() -> ExitCode {
    // Ignore libtest flags that cargo may forward; keep the first free word as a filter.
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = Vec::new();
    let mut ran = 0;
    for c in criteria().iter().filter(|c| filter.as_deref().is_none_or(|f| c.matches(f))) {
        let o = c.run();
        report(&o);
        ran += 1;
        if !o.passed() {
            failed.push(o.id);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
