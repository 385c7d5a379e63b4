//! A small simulation study: a few replications of two scenarios, bias,
//! RMSE and coverage per method, and the raw table for re-aggregation.
//!
//! ```text
//! cargo run --release --example simulation_study -- 3
//! ```

use misclass::simstudy::{aggregate_all, read_raw_table, run_scenarios, write_raw_table, HarnessConfig, Target};

fn main() -> misclass::Result<()> {
    let reps: usize = std::env::args().nth(1).map_or(2, |s| s.parse().expect("reps must be an integer"));
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let out = run_scenarios(&[1, 4], reps, 2024, jobs, &HarnessConfig::desk())?;

    println!("{:<3} {:<18} {:<11} {:>7} {:>7} {:>7}", "s", "method", "target", "bias", "rmse", "cover");
    for r in &out.metrics.rows {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        let target = if r.target == Target::BetaX { "beta_x" } else { "tau_beta_x" };
        println!(
            "{:<3} {:<18} {:<11} {:>7} {:>7} {:>7}",
            r.scenario,
            r.method.name(),
            target,
            f(r.bias),
            f(r.rmse),
            f(r.coverage95)
        );
    }

    let mut buf = Vec::new();
    write_raw_table(&out.raw, &mut buf)?;
    assert_eq!(aggregate_all(&read_raw_table(buf.as_slice())?)?, out.metrics);
    Ok(())
}
