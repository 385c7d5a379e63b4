//! Sample a model's prior by running the sampler without records, useful
//! for checking what the heterogeneity priors imply.

use misclass::diagnostics::summarize;
use misclass::model::{preset, PriorConfig};
use misclass::sampler::sample_prior;
use misclass::SamplerConfig;

fn main() -> misclass::Result<()> {
    for (label, priors) in [("half-normal", PriorConfig::default()), ("inverse-gamma", PriorConfig::with_inverse_gamma())] {
        let spec = preset("eq7-5-3")?.with_priors(priors);
        let out = sample_prior(&spec, 10, 0, &SamplerConfig::desk(9).with_monitor(&["tau_*", "lambda00"]))?;
        println!("{label}");
        for p in &summarize(&out.draws).params {
            println!("  {:<10} mean {:>7.3}  sd {:>6.3}", p.name, p.mean, p.sd);
        }
    }
    Ok(())
}
