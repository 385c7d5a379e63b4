//! Two-stage aggregate-data meta-analysis: per-study Newton–Raphson
//! logistic fits, then a normal–normal random-effects model.

use misclass::comparators::{admeta_random_effects, inverse_variance_pool, make_naive, study_estimates};
use misclass::model::PriorConfig;
use misclass::simulate::{simulate_study, SimScenarioConfig};
use misclass::SamplerConfig;

fn main() -> misclass::Result<()> {
    let (data, _) = simulate_study(&SimScenarioConfig::default(), 8);
    let naive = make_naive(&data.observed)?;

    let (estimates, unstable) = study_estimates(&naive, true);
    for e in &estimates {
        println!("study {:>2}: log OR {:>6.3}  se {:.3}", e.study + 1, e.est, e.se);
    }
    println!("unstable fits: {unstable:?}");

    let (pooled, se) = inverse_variance_pool(&estimates);
    println!("fixed-effect pooled: {pooled:.3} (se {se:.3})");

    let fit = admeta_random_effects(&estimates, &PriorConfig::default(), &SamplerConfig::desk(2), None)?;
    println!("mu  {:.3} ({:.3} : {:.3})", fit.mu.median, fit.mu.ci95_low, fit.mu.ci95_high);
    println!("tau {:.3} ({:.3} : {:.3})", fit.tau.median, fit.tau.ci95_low, fit.tau.ci95_high);
    Ok(())
}
