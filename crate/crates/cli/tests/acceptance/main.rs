//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

mod criteria;
mod repro;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Outcome of one criterion: `Ok(detail)` or `Err(reason)`.
pub type Verdict = Result<String, String>;

/// Fails with `msg` unless `cond` holds.
pub fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Fails when `elapsed` exceeds `limit`.
pub fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(
        elapsed <= limit,
        format!(
            "took {:.1} s, limit {:.0} s",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn run(name: &str, f: fn() -> Verdict) -> bool {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into());
        Err(msg)
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{tag}  {name:<20} {detail} [{secs:.1} s]");
    ok
}

fn main() {
    // cargo passes harness flags such as `--nocapture`; nothing here takes arguments.
    let suite: [Criterion; 8] = [
        ("gradient-suite", criteria::gradient_suite),
        ("decoding-oracle", criteria::decoding_oracle),
        ("span-algebra", criteria::span_algebra),
        ("segmenting", criteria::segmenting),
        ("metric-goldens", criteria::metric_goldens),
        ("integrated-gradients", criteria::integrated_gradients),
        ("training-smoke", criteria::training_smoke),
        ("reproducibility", repro::reproducibility),
    ];
    panic::set_hook(Box::new(|_| {}));
    let failed = suite.iter().filter(|(name, f)| !run(name, *f)).count();
    let _ = panic::take_hook();
    println!("{} of {} criteria passed", suite.len() - failed, suite.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
