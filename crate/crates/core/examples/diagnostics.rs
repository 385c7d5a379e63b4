//! Split R-hat and effective sample size on synthetic chains with known
//! behaviour.

use misclass::diagnostics::{ess, split_rhat};
use misclass::rng::stream;
use rand::Rng as _;
use rand_distr::StandardNormal;

fn ar1(seed: u64, n: usize, rho: f64, shift: f64) -> Vec<f64> {
    let mut r = stream(seed, &[0]);
    let mut v = 0.0;
    (0..n)
        .map(|_| {
            v = rho * v + (1.0 - rho * rho).sqrt() * r.sample::<f64, _>(StandardNormal);
            v + shift
        })
        .collect()
}

fn main() -> misclass::Result<()> {
    let n = 10_000;
    for (label, chains) in [
        ("iid", vec![ar1(1, n, 0.0, 0.0), ar1(2, n, 0.0, 0.0)]),
        ("AR(1) 0.9", vec![ar1(3, n, 0.9, 0.0), ar1(4, n, 0.9, 0.0)]),
        ("separated", vec![ar1(5, n, 0.0, 0.0), ar1(6, n, 0.0, 3.0)]),
    ] {
        println!("{label:<10} rhat {:.4}  ess {:>8.0} of {}", split_rhat(&chains)?, ess(&chains)?, 2 * n);
    }
    println!("AR(1) 0.9 theory: ess = N (1 - rho) / (1 + rho) = {:.0}", 2.0 * n as f64 / 19.0);
    Ok(())
}
