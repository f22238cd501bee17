//! Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are still evaluated at their stated
//! tolerances and still print FAIL; they do not stop the rest of
//! `cargo test --workspace`. Any other failure exits nonzero, and so does a
//! known failure that starts passing, so the list cannot go stale.
//! `indhead verify` makes no exceptions and exits 2 on any failure.

use indhead_cli::acceptance::run_all;

/// Criterion 5: at the default settings the induction loss has already fallen
/// to ≈7% of its start when the 4-gram loss reaches 1%, because `w_V2`
/// equilibrates before `T_I`. The other clauses of criterion 5 pass.
const KNOWN_FAILURES: [usize; 1] = [5];

fn main() {
    // `cargo test -- --list` probes test binaries for their test names.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    println!("acceptance criteria, seed 42");
    let results = run_all(42, &[], |r| println!("{}", r.line()));
    let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    let known: Vec<usize> = failed.iter().copied().filter(|id| KNOWN_FAILURES.contains(id)).collect();
    let unexpected: Vec<usize> = failed.iter().copied().filter(|id| !KNOWN_FAILURES.contains(id)).collect();
    let fixed: Vec<usize> = KNOWN_FAILURES.iter().copied().filter(|id| !failed.contains(id)).collect();
    if !known.is_empty() {
        println!("known failures (measured and reported, see README): {known:?}");
    }
    if !fixed.is_empty() {
        println!("known failures now passing, remove them from KNOWN_FAILURES: {fixed:?}");
    }
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
    }
    if !unexpected.is_empty() || !fixed.is_empty() {
        std::process::exit(1);
    }
}
