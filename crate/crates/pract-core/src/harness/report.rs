//! Results emission: a `results.csv` table plus one curve file per seed,
//! scores rendered to 4 decimal places.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{io_err, HarnessError, OptimizationRun, SeedRun};

/// Renders a score to 4 decimal places with decimal half-up rounding, the
/// convention used throughout the emitted tables (0.60115 -> "0.6012").
pub fn format_score(x: f64) -> String {
    let scaled5 = (x * 100_000.0).round() as i64;
    let scaled4 = (scaled5 + 5).div_euclid(10);
    format!("{}.{:04}", scaled4.div_euclid(10_000), scaled4.rem_euclid(10_000))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(format_score).unwrap_or_default()
}

fn iteration_rows(out: &mut String, seed_run: &SeedRun) {
    for rec in &seed_run.iterations {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            rec.iteration,
            rec.principle_version,
            format_score(rec.train_reward),
            fmt_opt(rec.val_reward),
        );
    }
}

/// Writes `results.csv` and per-seed `seed_<s>/curve.csv`, returning the
/// written paths. The results table carries one row per iteration (per
/// seed, in seed order) and a trailing summary row with the test mean and
/// seed count.
pub fn emit_report(run: &OptimizationRun, output_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();

    let mut results = String::from("iteration,principle_version,train_reward,val_reward\n");
    for seed_run in &run.seed_runs {
        iteration_rows(&mut results, seed_run);
    }
    let status = if run.complete { "complete" } else { "incomplete" };
    let _ = writeln!(
        results,
        "summary,test_mean={},seeds={},{status}",
        fmt_opt(run.aggregate_test_mean),
        run.seed_runs.len(),
    );
    let results_path = output_dir.join("results.csv");
    std::fs::write(&results_path, &results).map_err(|e| io_err(&results_path, e))?;
    written.push(results_path);

    for seed_run in &run.seed_runs {
        let seed_dir = output_dir.join(format!("seed_{}", seed_run.seed));
        std::fs::create_dir_all(&seed_dir).map_err(|e| io_err(&seed_dir, e))?;
        let mut curve = String::from("iteration,principle_version,train_reward,val_reward\n");
        iteration_rows(&mut curve, seed_run);
        let _ = writeln!(
            curve,
            "summary,test_mean={},seeds=1,{status}",
            fmt_opt(seed_run.test_score),
        );
        let path = seed_dir.join("curve.csv");
        std::fs::write(&path, &curve).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }

    Ok(written)
}

/// Human-readable summary printed by the CLI.
pub fn render_summary_table(run: &OptimizationRun) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "env: {}  protocol: {}", run.env_id, run.protocol);
    let _ = writeln!(
        out,
        "{:<6} {:>9} {:>12} {:>10} {:>10}",
        "seed", "stop_iter", "best_version", "best_val", "test"
    );
    for s in &run.seed_runs {
        let _ = writeln!(
            out,
            "{:<6} {:>9} {:>12} {:>10} {:>10}",
            s.seed,
            s.stop_iter,
            s.best_version,
            fmt_opt(s.best_val),
            fmt_opt(s.test_score),
        );
    }
    let _ = writeln!(
        out,
        "aggregate test mean over {} seed(s): {}",
        run.seed_runs.len(),
        fmt_opt(run.aggregate_test_mean),
    );
    if !run.complete {
        let _ = writeln!(out, "status: INCOMPLETE (aborted run)");
    }
    out
}
