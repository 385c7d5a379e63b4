//! Fit a named misclassification model to simulated dengue data and print
//! the posterior summary.
//!
//! ```text
//! cargo run --release --example fit_preset -- eq8-5-3
//! ```

use misclass::diagnostics::summarize;
use misclass::simulate::{simulate_dengue, DengueScenarioConfig};
use misclass::{preset, SamplerConfig};

fn main() -> misclass::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "eq8-5-3".into());
    let spec = preset(&name)?;
    let data = simulate_dengue(&DengueScenarioConfig::scenario(1)?, 11);

    let draws = misclass::fit(&spec, &data.observed, &SamplerConfig::desk(1))?;
    let summary = summarize(&draws);

    println!("{name}: {} chains x {} draws", draws.chain_count, draws.draws_per_chain);
    for p in &summary.params {
        println!(
            "{:<12} {:>7.3} ({:>6.3} : {:>6.3})  rhat {:.3}",
            p.name,
            p.median,
            p.ci95_low,
            p.ci95_high,
            p.rhat.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
