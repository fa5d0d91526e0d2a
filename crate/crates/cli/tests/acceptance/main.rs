//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod analysis;
mod api;
mod cli;
mod ingestion;
mod ontology;
mod sequencer;
#[path = "../support/mod.rs"]
mod support;
mod workflow;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// `Ok` carries a one-line summary of what was measured.
pub type Verdict = Result<String, String>;

/// Turns a condition into a verdict failure with `msg`.
pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Verdict,
}

fn main() {
    let criteria = [
        Criterion { name: "workflow-invariants", budget: Some(Duration::from_secs(30)), run: workflow::check },
        Criterion { name: "ontology-oracle", budget: Some(Duration::from_secs(20)), run: ontology::check },
        Criterion { name: "sequencer-oracle", budget: Some(Duration::from_secs(60)), run: sequencer::check },
        Criterion { name: "ingestion-round-trip", budget: Some(Duration::from_secs(10)), run: ingestion::check },
        Criterion { name: "analysis-determinism", budget: None, run: analysis::check },
        Criterion { name: "api-concurrency", budget: None, run: api::check },
        Criterion { name: "cli-golden-files", budget: None, run: cli::check },
    ];
    let mut failed = 0;
    for c in &criteria {
        let started = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".to_owned());
            Err(format!("panic: {msg}"))
        });
        let elapsed = started.elapsed();
        let verdict = match (verdict, c.budget) {
            (Ok(_), Some(budget)) if elapsed > budget => {
                Err(format!("took {:.1}s, budget {}s", elapsed.as_secs_f64(), budget.as_secs()))
            }
            (v, _) => v,
        };
        match verdict {
            Ok(summary) => println!("PASS {:<22} {:>6.2}s  {summary}", c.name, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {:<22} {:>6.2}s  {why}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
